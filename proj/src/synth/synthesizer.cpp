// SPDX-License-Identifier: Apache-2.0

#include "ltgen/synth/synthesizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "ltgen/core/error.hpp"
#include "ltgen/core/io.hpp"
#include "ltgen/core/optim.hpp"
#include "ltgen/core/rng.hpp"

namespace ltgen::synth {

using data::Dataset;
using data::ImageSample;
using data::kPixels;
using data::Split;
namespace {

constexpr std::uint64_t kTrainStream = 0x5e7;
constexpr std::uint64_t kSampleStream = 0x5a3;

std::string shortest(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void check_finite(double v, const char* what, std::size_t epoch) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string(what) + " became non-finite in epoch " + std::to_string(epoch));
  }
}

}  // namespace

std::string describe(const SynthConfig& c) {
  std::string out;
  auto line = [&](const char* key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  };
  line("steps", std::to_string(c.steps));
  line("beta_min", shortest(c.beta_min));
  line("beta_max", shortest(c.beta_max));
  line("embed_dim", std::to_string(c.embed_dim));
  line("hidden1", std::to_string(c.hidden1));
  line("hidden2", std::to_string(c.hidden2));
  line("sketch_weight", shortest(c.sketch_weight));
  line("lr", shortest(c.lr));
  line("weight_decay", shortest(c.weight_decay));
  line("epochs", std::to_string(c.epochs));
  line("batch_size", std::to_string(c.batch_size));
  line("seed", std::to_string(c.seed));
  line("clip_denoised", c.clip_denoised ? "1" : "0");
  return out;
}

std::uint64_t config_hash(const SynthConfig& config) { return fnv1a64(describe(config)); }

double ldm_loss(const NoisePredictor& predictor, const Matrix& z0, std::span<const std::size_t> t,
                const Matrix& noise, std::span<const std::size_t> labels,
                const NoiseSchedule& schedule) {
  const Matrix z_t = forward_diffuse(z0, t, noise, schedule);
  const Matrix predicted = predictor(z_t, t, labels);
  if (!predicted.same_shape(noise)) throw ShapeError("noise prediction shape mismatch");
  if (noise.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    const double d = predicted[i] - noise[i];
    acc += d * d;
  }
  return acc / static_cast<double>(noise.size());
}

double sketch_loss(const Matrix& predicted, const Matrix& target, std::span<const std::size_t> t,
                   const NoiseSchedule& schedule) {
  if (!predicted.same_shape(target)) throw ShapeError("sketch shape mismatch");
  if (t.size() != predicted.rows()) throw ShapeError("one timestep per sketch row required");
  if (predicted.rows() == 0 || predicted.cols() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t r = 0; r < predicted.rows(); ++r) {
    const auto p = predicted.row(r);
    const auto g = target.row(r);
    double row = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) row += std::abs(p[c] - g[c]);
    acc += std::sqrt(schedule.alpha_bar(t[r])) * row / static_cast<double>(p.size());
  }
  return acc / static_cast<double>(predicted.rows());
}

double total_loss(double ldm, double sketch, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("sketch weight must be non-negative");
  return lambda == 0.0 ? ldm : ldm + lambda * sketch;
}

LossVars record_loss(Tape& tape, std::span<const Var> bound, const DenoiserModel& model,
                     const SynthBatch& batch, const NoiseSchedule& schedule, double lambda) {
  if (!(lambda >= 0.0)) throw ContractError("sketch weight must be non-negative");
  const Matrix z_t = forward_diffuse(batch.z0, batch.t, batch.noise, schedule);
  const bool with_sketch = lambda > 0.0;
  const auto out = model.forward(tape, bound, z_t, batch.t, batch.labels, with_sketch);
  LossVars vars;
  vars.ldm = tape.mse(out.noise, tape.constant(batch.noise));
  if (!with_sketch) {
    vars.total = vars.ldm;
    return vars;
  }
  std::vector<double> weights(batch.t.size());
  for (std::size_t r = 0; r < weights.size(); ++r) weights[r] = std::sqrt(schedule.alpha_bar(batch.t[r]));
  vars.sketch = tape.weighted_l1(out.sketch, tape.constant(batch.sketch), std::move(weights));
  vars.total = tape.add(vars.ldm, tape.scale(vars.sketch, lambda));
  return vars;
}

Checkpoint train_synthesizer(const Dataset& dataset, const SynthConfig& config) {
  if (config.batch_size == 0) throw ConfigError("synthesizer batch size must be positive");
  const auto train = dataset.split(Split::kTrain);
  const auto counts = dataset.class_counts(Split::kTrain);
  for (std::size_t c = 0; c < dataset.num_classes; ++c) {
    if (counts[c] == 0) {
      throw ContractError("class " + std::to_string(c) + " has no training images");
    }
  }

  Checkpoint ck;
  ck.config = config;
  ck.schedule = build_schedule(config.steps, config.beta_min, config.beta_max);
  DenoiserConfig arch{dataset.num_classes, config.steps, config.embed_dim,
                      config.hidden1,      config.hidden2, kPixels};
  ck.model = DenoiserModel(arch, ck.schedule, config.seed);
  Adam opt({.lr = config.lr, .weight_decay = config.weight_decay}, ck.model.params());

  const RngStream root(config.seed, kTrainStream);
  std::vector<std::size_t> order(train.size());
  const std::size_t T = config.steps;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    RngStream rng = root.substream(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, order.size() - start);
      SynthBatch batch{Matrix(b, kPixels), std::vector<std::size_t>(b), Matrix(b, kPixels),
                       std::vector<std::size_t>(b), Matrix(b, kPixels)};
      for (std::size_t r = 0; r < b; ++r) {
        const ImageSample& s = train[order[start + r]];
        for (std::size_t i = 0; i < kPixels; ++i) {
          batch.z0(r, i) = s.intensity(i);
          batch.sketch(r, i) = s.sketch[i];
          batch.noise(r, i) = rng.normal();
        }
        batch.t[r] = 1 + rng.index(T);
        batch.labels[r] = s.label;
      }
      Tape tape;
      const auto bound = bind_parameters(tape, ck.model.params());
      const auto loss = record_loss(tape, bound, ck.model, batch, ck.schedule, config.sketch_weight);
      const double value = tape.value(loss.total)[0];
      check_finite(value, "synthesizer loss", epoch);
      auto grads = tape.backward(loss.total);
      const auto g = collect_gradients(grads, bound);
      opt.step(ck.model.params(), g);
      epoch_loss += value * static_cast<double>(b);
      seen += b;
    }
    ck.loss_history.push_back(seen ? epoch_loss / static_cast<double>(seen) : 0.0);
    ck.epochs_trained = epoch + 1;
  }
  return ck;
}

Matrix reverse_chain(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                     std::size_t label, std::size_t n, RngStream& rng, bool clip_denoised,
                     const std::function<void(std::size_t, const Matrix&)>& observer) {
  if (n == 0) return Matrix(0, kPixels);
  Matrix x(n, kPixels);
  for (double& v : x.data()) v = rng.normal();
  const std::vector<std::size_t> labels(n, label);
  std::vector<std::size_t> steps(n);
  for (std::size_t t = schedule.steps(); t >= 1; --t) {
    std::fill(steps.begin(), steps.end(), t);
    const Matrix eps = predictor(x, steps, labels);
    if (!eps.same_shape(x)) throw ShapeError("noise prediction shape mismatch");
    const double ab = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar_prev(t);
    const double beta = schedule.beta(t);
    // Posterior mean of q(x_{t-1} | x_t, x̂_0).
    const double x0_coef = beta * std::sqrt(ab_prev) / (1.0 - ab);
    const double xt_coef = (1.0 - ab_prev) * std::sqrt(schedule.alpha(t)) / (1.0 - ab);
    const double sigma = t > 1 ? std::sqrt(schedule.posterior_variance(t)) : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double x0 = (x[i] - std::sqrt(1.0 - ab) * eps[i]) / std::sqrt(ab);
      if (clip_denoised) x0 = std::clamp(x0, 0.0, 1.0);
      double v = x0_coef * x0 + xt_coef * x[i];
      if (t > 1) v += sigma * rng.normal();
      if (!std::isfinite(v)) {
        throw NumericError("reverse chain produced a non-finite value at t=" + std::to_string(t));
      }
      x[i] = v;
    }
    if (observer) observer(t, x);
  }
  for (double& v : x.data()) v = std::clamp(v, 0.0, 1.0);
  return x;
}

Matrix sample(const Checkpoint& ck, std::size_t label, std::size_t n, std::uint64_t seed,
              const std::function<void(std::size_t, const Matrix&)>& observer) {
  if (ck.epochs_trained == 0) throw ModelError("checkpoint is untrained");
  const auto& arch = ck.model.config();
  if (ck.model.params().size() != DenoiserModel::kSlotCount) throw ModelError("checkpoint has no parameters");
  if (ck.schedule.steps() != arch.steps) throw ModelError("schedule and model disagree on step count");
  if (arch.image_size != kPixels) throw ModelError("model image size is not 256");
  if (label >= arch.num_classes) throw ContractError("class label out of range");
  RngStream rng = RngStream(seed, kSampleStream).substream(label);
  const NoisePredictor predictor = [&](const Matrix& z, std::span<const std::size_t> t,
                                       std::span<const std::size_t> c) {
    return ck.model.predict_noise(z, t, c);
  };
  return reverse_chain(predictor, ck.schedule, label, n, rng, ck.config.clip_denoised, observer);
}

SynthPool generate_pool(const Checkpoint& checkpoint, std::size_t per_class, std::uint64_t seed) {
  SynthPool pool;
  pool.checkpoint_epoch = checkpoint.epochs_trained;
  pool.seed = seed;
  for (std::size_t c = 0; c < checkpoint.model.config().num_classes; ++c) {
    pool.images.push_back(sample(checkpoint, c, per_class, seed));
  }
  return pool;
}

}  // namespace ltgen::synth
