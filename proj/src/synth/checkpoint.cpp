// SPDX-License-Identifier: Apache-2.0

#include <string>

#include "ltgen/core/error.hpp"
#include "ltgen/core/io.hpp"
#include "ltgen/synth/synthesizer.hpp"

namespace ltgen::synth {

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.magic("LTCK");
  w.u64(config_hash(ck.config));
  const std::string text = describe(ck.config);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.raw({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  const auto& arch = ck.model.config();
  w.u32(static_cast<std::uint32_t>(arch.num_classes));
  w.u32(static_cast<std::uint32_t>(arch.steps));
  w.u32(static_cast<std::uint32_t>(arch.embed_dim));
  w.u32(static_cast<std::uint32_t>(arch.hidden1));
  w.u32(static_cast<std::uint32_t>(arch.hidden2));
  w.u32(static_cast<std::uint32_t>(arch.image_size));
  w.u64(ck.epochs_trained);
  w.u32(static_cast<std::uint32_t>(ck.loss_history.size()));
  for (double v : ck.loss_history) w.f64(v);
  const auto betas = ck.schedule.betas();
  w.u32(static_cast<std::uint32_t>(betas.size()));
  for (double b : betas) w.f64(b);
  const auto& params = ck.model.params();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.raw({reinterpret_cast<const std::uint8_t*>(p.name.data()), p.name.size()});
    put_matrix(w, p.value);
  }
  seal(w);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(unseal(bytes, "LTCK"));
  r.expect_magic("LTCK");
  Checkpoint ck;
  const std::uint64_t hash = r.u64();
  const std::uint32_t text_len = r.u32();
  const auto text = r.raw(text_len);
  const std::string described(text.begin(), text.end());
  if (fnv1a64(described) != hash) throw CorruptionError("config hash does not match stored config");

  DenoiserConfig arch;
  arch.num_classes = r.u32();
  arch.steps = r.u32();
  arch.embed_dim = r.u32();
  arch.hidden1 = r.u32();
  arch.hidden2 = r.u32();
  arch.image_size = r.u32();
  ck.epochs_trained = r.u64();
  ck.loss_history.resize(r.u32());
  if (ck.loss_history.size() * 8 > r.remaining()) throw CorruptionError("loss history exceeds payload");
  for (double& v : ck.loss_history) v = r.f64();
  std::vector<double> betas(r.u32());
  if (betas.size() * 8 > r.remaining()) throw CorruptionError("schedule exceeds payload");
  for (double& b : betas) b = r.f64();
  if (betas.size() != arch.steps) throw ModelError("schedule length disagrees with model step count");
  try {
    ck.schedule = NoiseSchedule::from_betas(std::move(betas));
  } catch (const ConfigError& e) {
    throw ModelError(std::string("invalid stored schedule: ") + e.what());
  }

  ParameterSet params(r.u32());
  if (params.size() > 64) throw CorruptionError("implausible tensor count");
  for (auto& p : params) {
    const auto name = r.raw(r.u32());
    p.name.assign(name.begin(), name.end());
    p.value = get_matrix(r);
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after parameters");
  ck.model = DenoiserModel(arch, ck.schedule, std::move(params));

  // Recover the typed config from its canonical text.
  SynthConfig& c = ck.config;
  std::size_t pos = 0;
  while (pos < described.size()) {
    const auto eol = described.find('\n', pos);
    const std::string line = described.substr(pos, eol - pos);
    pos = eol == std::string::npos ? described.size() : eol + 1;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "steps") c.steps = std::stoull(value);
    else if (key == "beta_min") c.beta_min = std::stod(value);
    else if (key == "beta_max") c.beta_max = std::stod(value);
    else if (key == "embed_dim") c.embed_dim = std::stoull(value);
    else if (key == "hidden1") c.hidden1 = std::stoull(value);
    else if (key == "hidden2") c.hidden2 = std::stoull(value);
    else if (key == "sketch_weight") c.sketch_weight = std::stod(value);
    else if (key == "lr") c.lr = std::stod(value);
    else if (key == "weight_decay") c.weight_decay = std::stod(value);
    else if (key == "epochs") c.epochs = std::stoull(value);
    else if (key == "batch_size") c.batch_size = std::stoull(value);
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "clip_denoised") c.clip_denoised = value == "1";
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::vector<std::uint8_t> encode_pool(const SynthPool& pool) {
  ByteWriter w;
  w.magic("LTP1");
  w.u64(pool.checkpoint_epoch);
  w.u64(pool.seed);
  w.u32(static_cast<std::uint32_t>(pool.images.size()));
  for (const auto& m : pool.images) put_matrix(w, m);
  seal(w);
  return w.take();
}

SynthPool decode_pool(std::span<const std::uint8_t> bytes) {
  ByteReader r(unseal(bytes, "LTP1"));
  r.expect_magic("LTP1");
  SynthPool pool;
  pool.checkpoint_epoch = r.u64();
  pool.seed = r.u64();
  const std::size_t classes = r.u32();
  if (classes > data::kMaxClasses) throw CorruptionError("implausible class count in pool");
  for (std::size_t c = 0; c < classes; ++c) {
    Matrix m = get_matrix(r);
    if (m.rows() > 0 && m.cols() != data::kPixels) throw FormatError("pool images must have 256 pixels");
    for (double v : m.data()) {
      if (v < 0.0 || v > 1.0) throw CorruptionError("pool pixel outside [0,1]");
    }
    pool.images.push_back(std::move(m));
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes in pool");
  return pool;
}

void save_pool(const SynthPool& pool, const std::filesystem::path& path) {
  write_file(path, encode_pool(pool));
}

SynthPool load_pool(const std::filesystem::path& path) { return decode_pool(read_file(path)); }

}  // namespace ltgen::synth
