// SPDX-License-Identifier: Apache-2.0

#include "ltgen/clf/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "ltgen/core/error.hpp"
#include "ltgen/core/io.hpp"

namespace ltgen::clf {
namespace {

constexpr std::uint64_t kInitStream = 0xC1A;
constexpr std::uint64_t kEpochStream = 0xC1E;
constexpr std::uint64_t kEpisodeStream = 0xC1F;

void check_prior(std::span<const double> prior) {
  if (prior.empty()) throw ContractError("empty class prior");
  for (double p : prior) {
    if (!(p > 0.0) || !std::isfinite(p)) throw ContractError("class prior entries must be positive");
  }
}

std::vector<double> log_prior(std::span<const double> prior) {
  check_prior(prior);
  std::vector<double> out(prior.size());
  for (std::size_t c = 0; c < prior.size(); ++c) out[c] = std::log(prior[c]);
  return out;
}

Matrix he_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  Matrix m(rows, cols);
  const double scale = std::sqrt(2.0 / static_cast<double>(rows));
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

Matrix affine_relu(const Matrix& x, const Matrix& w, const Matrix& b, bool relu) {
  Matrix h = matmul(x, w);
  for (std::size_t r = 0; r < h.rows(); ++r) {
    for (std::size_t c = 0; c < h.cols(); ++c) {
      h(r, c) += b(0, c);
      if (relu && h(r, c) < 0.0) h(r, c) = 0.0;
    }
  }
  return h;
}

double episode_score(const MetricsReport& m, EpisodeMetric metric) {
  const double pct = metric == EpisodeMetric::kMacroF1 ? m.f1 : m.all;
  return std::clamp(pct / 100.0, 0.0, 1.0);
}

}  // namespace

ClassifierModel ClassifierModel::create(std::vector<double> prior, std::size_t hidden1, std::size_t hidden2,
                                        std::uint64_t seed) {
  check_prior(prior);
  if (hidden1 == 0 || hidden2 == 0) throw ConfigError("classifier hidden widths must be positive");
  RngStream rng(seed, kInitStream);
  const std::size_t c = prior.size();
  ClassifierModel m;
  m.prior = std::move(prior);
  m.params = {{"w1", he_matrix(data::kPixels, hidden1, rng)}, {"b1", Matrix(1, hidden1)},
              {"w2", he_matrix(hidden1, hidden2, rng)},       {"b2", Matrix(1, hidden2)},
              {"w3", he_matrix(hidden2, c, rng)},             {"b3", Matrix(1, c)}};
  return m;
}

Matrix ClassifierModel::logits(const Matrix& x) const {
  if (params.size() != 6) throw ModelError("classifier has no parameters");
  if (x.cols() != params[0].value.rows()) throw ShapeError("classifier input width mismatch");
  const Matrix h1 = affine_relu(x, params[0].value, params[1].value, true);
  const Matrix h2 = affine_relu(h1, params[2].value, params[3].value, true);
  return affine_relu(h2, params[4].value, params[5].value, false);
}

std::vector<std::size_t> ClassifierModel::predict(const Matrix& x) const {
  const Matrix z = logits(x);
  std::vector<std::size_t> out(z.rows());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto row = z.row(r);
    out[r] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Var classifier_logits(Tape& tape, std::span<const Var> bound, Var x) {
  if (bound.size() != 6) throw ModelError("classifier expects six bound tensors");
  const Var h1 = tape.relu(tape.add_row(tape.matmul(x, bound[0]), bound[1]));
  const Var h2 = tape.relu(tape.add_row(tape.matmul(h1, bound[2]), bound[3]));
  return tape.add_row(tape.matmul(h2, bound[4]), bound[5]);
}

std::vector<double> class_prior(std::span<const std::size_t> counts) {
  double total = 0.0;
  for (std::size_t n : counts) {
    if (n == 0) throw ContractError("a class has no training samples");
    total += static_cast<double>(n);
  }
  if (counts.empty()) throw ContractError("no classes");
  std::vector<double> prior(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) prior[c] = static_cast<double>(counts[c]) / total;
  return prior;
}

double balanced_softmax_loss(const Matrix& logits, std::span<const std::size_t> labels,
                             std::span<const double> prior) {
  if (prior.size() != logits.cols()) throw ShapeError("one prior entry per class");
  Tape tape;
  const Var out = tape.softmax_cross_entropy(tape.constant(logits), {labels.begin(), labels.end()},
                                             log_prior(prior));
  return tape.value(out)(0, 0);
}

Var balanced_softmax_loss(Tape& tape, Var logits, std::vector<std::size_t> labels,
                          std::span<const double> prior) {
  if (prior.size() != tape.value(logits).cols()) throw ShapeError("one prior entry per class");
  return tape.softmax_cross_entropy(logits, std::move(labels), log_prior(prior));
}

Strategy parse_strategy(std::string_view name) {
  if (name == "baseline") return Strategy::kBaseline;
  if (name == "fixed-mix") return Strategy::kFixedMix;
  if (name == "class-balanced-resample") return Strategy::kResample;
  if (name == "rl-cas") return Strategy::kRlCas;
  throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string_view strategy_name(Strategy strategy) noexcept {
  switch (strategy) {
    case Strategy::kBaseline: return "baseline";
    case Strategy::kFixedMix: return "fixed-mix";
    case Strategy::kResample: return "class-balanced-resample";
    case Strategy::kRlCas: return "rl-cas";
  }
  return "baseline";
}

rlcas::SamplerState resample_state(std::span<const std::size_t> train_counts, std::size_t real_per_batch) {
  if (train_counts.empty()) throw ContractError("no classes");
  const std::size_t head = *std::max_element(train_counts.begin(), train_counts.end());
  double total = 0.0;
  for (std::size_t n : train_counts) total += static_cast<double>(n);
  rlcas::SamplerState state(train_counts.size());
  for (std::size_t c = 0; c < train_counts.size(); ++c) {
    state[c] = static_cast<int>(
        std::lround(static_cast<double>(real_per_batch) * static_cast<double>(head - train_counts[c]) / total));
  }
  return state;
}

double train_epoch(ClassifierModel& model, Adam& optimizer, const rlcas::LabeledImages& real,
                   const synth::SynthPool& pool, std::span<const int> state, const ClassifierConfig& config,
                   RngStream& rng) {
  const auto plan = rlcas::plan_real_batches(real, config.real_per_batch, config.class_balanced_real, rng);
  const std::vector<double> uniform(model.num_classes(), 1.0 / static_cast<double>(model.num_classes()));
  const std::span<const double> prior = config.balanced_softmax ? std::span<const double>(model.prior)
                                                                : std::span<const double>(uniform);
  double total = 0.0;
  for (const auto& rows : plan) {
    rlcas::Batch batch = rlcas::compose_batch(state, rows, real, pool, rng);
    Tape tape;
    const auto bound = bind_parameters(tape, model.params);
    const Var z = classifier_logits(tape, bound, tape.constant(std::move(batch.images)));
    const Var loss = balanced_softmax_loss(tape, z, std::move(batch.labels), prior);
    const double value = tape.value(loss)(0, 0);
    if (!std::isfinite(value)) throw NumericError("classifier loss is not finite");
    total += value;
    auto grads = tape.backward(loss);
    optimizer.step(model.params, collect_gradients(grads, bound));
  }
  return total / static_cast<double>(plan.size());
}

MetricsReport evaluate(const ClassifierModel& model, const rlcas::LabeledImages& split,
                       std::span<const ShotGroup> groups, AllMode all_mode) {
  if (split.size() == 0) throw ContractError("evaluation split is empty");
  const auto predicted = model.predict(split.images);
  const auto confusion = ConfusionMatrix::from_predictions(split.labels, predicted, model.num_classes());
  return compute_metrics(confusion, groups, all_mode);
}

TrainResult train_classifier(const TrainData& data, Strategy strategy, const ClassifierConfig& config,
                             const synth::SynthPool& pool, const rlcas::RlCasConfig& sampler) {
  const std::size_t c = data.train.num_classes;
  if (data.val.size() == 0) throw ContractError("validation split is empty");
  if (strategy != Strategy::kBaseline && pool.num_classes() != c) {
    throw DependencyError("strategy '" + std::string(strategy_name(strategy)) +
                          "' needs a synthetic pool with one set per class");
  }
  if (config.fixed_mix < 0) throw ConfigError("fixed_mix must be non-negative");
  const auto counts = data.train.class_counts();
  const auto groups = assign_shot_groups(counts, config.shots);

  TrainResult result{ClassifierModel::create(class_prior(counts), config.hidden1, config.hidden2, config.seed), {}};
  Adam optimizer({.lr = config.lr, .weight_decay = config.weight_decay}, result.model.params);

  if (strategy != Strategy::kRlCas) {
    rlcas::SamplerState state(c, 0);
    if (strategy == Strategy::kFixedMix) state.assign(c, config.fixed_mix);
    if (strategy == Strategy::kResample) state = resample_state(counts, config.real_per_batch);
    const RngStream epochs(config.seed, kEpochStream);
    for (std::size_t e = 1; e <= config.epochs; ++e) {
      RngStream rng = epochs.substream(e);
      EpochRecord rec;
      rec.epoch = e;
      rec.train_loss = train_epoch(result.model, optimizer, data.train, pool, state, config, rng);
      rec.val = evaluate(result.model, data.val, groups, config.all_mode);
      rec.state = state;
      result.history.push_back(std::move(rec));
    }
    return result;
  }

  rlcas::RlCasConfig rl = sampler;
  rl.seed = config.seed;
  rlcas::RlCasController controller(rl, c);
  const RngStream episodes(config.seed, kEpisodeStream);
  struct Candidate {
    ClassifierModel model;
    Adam optimizer;
    double loss = 0.0;
    MetricsReport val;
  };
  for (std::size_t e = 1; e <= rl.agent_epochs; ++e) {
    std::vector<std::optional<Candidate>> candidates(rl.episodes);
    const auto outcome = controller.run_epoch([&](std::size_t j, const rlcas::SamplerState& state) {
      Candidate cand{result.model, optimizer, 0.0, {}};
      RngStream rng = episodes.substream(e).substream(j);
      cand.loss = train_epoch(cand.model, cand.optimizer, data.train, pool, state, config, rng);
      cand.val = evaluate(cand.model, data.val, groups, config.all_mode);
      const double score = episode_score(cand.val, config.episode_metric);
      candidates[j - 1] = std::move(cand);
      return score;
    });
    EpochRecord rec;
    rec.epoch = e;
    rec.state = outcome.episodes[outcome.winner].state;
    rec.sampler_log = outcome.to_json_line();
    auto& win = candidates[outcome.winner];
    if (!outcome.episodes[outcome.winner].diverged && win) {
      result.model = std::move(win->model);
      optimizer = std::move(win->optimizer);
      rec.train_loss = win->loss;
      rec.val = win->val;
    } else {
      rec.train_loss = NAN;
      rec.val = evaluate(result.model, data.val, groups, config.all_mode);
    }
    result.history.push_back(std::move(rec));
  }
  return result;
}

std::vector<std::uint8_t> encode_model(const ClassifierModel& model) {
  ByteWriter w;
  w.magic("LTCM");
  w.u32(static_cast<std::uint32_t>(model.prior.size()));
  for (double p : model.prior) w.f64(p);
  w.u32(static_cast<std::uint32_t>(model.params.size()));
  for (const auto& p : model.params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.raw({reinterpret_cast<const std::uint8_t*>(p.name.data()), p.name.size()});
    put_matrix(w, p.value);
  }
  seal(w);
  return w.take();
}

ClassifierModel decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(unseal(bytes, "LTCM"));
  r.expect_magic("LTCM");
  ClassifierModel m;
  const std::size_t c = r.u32();
  if (c == 0 || c > data::kMaxClasses) throw CorruptionError("classifier class count out of range");
  m.prior.resize(c);
  for (double& p : m.prior) p = r.f64();
  const std::size_t n = r.u32();
  if (n != 6) throw ModelError("classifier must have six tensors");
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = r.u32();
    const auto name = r.raw(len);
    m.params.push_back({std::string(name.begin(), name.end()), get_matrix(r)});
  }
  if (r.remaining() != 0) throw CorruptionError("trailing bytes after classifier payload");
  try {
    check_prior(m.prior);
  } catch (const ContractError& e) {
    throw ModelError(e.what());
  }
  const auto& p = m.params;
  const bool shapes_ok = p[0].value.rows() == data::kPixels && p[1].value.rows() == 1 &&
                         p[1].value.cols() == p[0].value.cols() && p[2].value.rows() == p[0].value.cols() &&
                         p[3].value.rows() == 1 && p[3].value.cols() == p[2].value.cols() && p[4].value.rows() == p[2].value.cols() &&
                         p[4].value.cols() == c && p[5].value.rows() == 1 && p[5].value.cols() == c;
  if (!shapes_ok) throw ModelError("classifier tensor shapes are inconsistent");
  return m;
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  write_file(path, encode_model(model));
}

ClassifierModel load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace ltgen::clf
