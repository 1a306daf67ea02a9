// SPDX-License-Identifier: Apache-2.0

#include "ltgen/synth/denoiser.hpp"

#include <cmath>
#include <string>

#include "ltgen/core/error.hpp"
#include "ltgen/core/rng.hpp"

namespace ltgen::synth {
namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = stddev * rng.normal();
  return m;
}

Matrix sinusoidal_table(std::size_t steps, std::size_t dim) {
  Matrix table(steps, dim);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < dim / 2; ++k) {
      const double freq = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
      table(t, 2 * k) = std::sin(static_cast<double>(t + 1) * freq);
      table(t, 2 * k + 1) = std::cos(static_cast<double>(t + 1) * freq);
    }
  }
  return table;
}

std::vector<std::pair<std::size_t, std::size_t>> expected_shapes(const DenoiserConfig& c) {
  return {{c.steps, c.embed_dim},         {c.num_classes, c.embed_dim},
          {c.image_size, c.hidden1},      {c.embed_dim, c.hidden1},
          {1, c.hidden1},                 {c.embed_dim, c.hidden1},
          {c.hidden1, c.hidden2},         {c.embed_dim, c.hidden2},
          {1, c.hidden2},                 {c.embed_dim, c.hidden2},
          {c.hidden2, c.image_size},      {1, c.image_size},
          {c.embed_dim, c.image_size},
          {c.hidden1 + c.hidden2, c.image_size}, {1, c.image_size}};
}

void add_row_inplace(Matrix& m, const Matrix& row) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto dst = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] += row[c];
  }
}

void relu_inplace(Matrix& m) {
  for (double& v : m.data()) v = v > 0.0 ? v : 0.0;
}

}  // namespace

DenoiserModel::DenoiserModel(DenoiserConfig config, const NoiseSchedule& schedule, std::uint64_t seed)
    : config_(config) {
  if (config.num_classes == 0 || config.steps == 0 || config.embed_dim == 0 ||
      config.hidden1 == 0 || config.hidden2 == 0) {
    throw ConfigError("denoiser dimensions must be positive");
  }
  set_schedule(schedule);
  RngStream rng(seed, 0xD3);
  const auto& c = config_;
  const double in_scale = std::sqrt(2.0 / static_cast<double>(c.image_size + c.embed_dim));
  const double hidden_scale = std::sqrt(2.0 / static_cast<double>(c.hidden1 + c.embed_dim));
  params_ = {
      {"time_embed", sinusoidal_table(c.steps, c.embed_dim)},
      {"class_embed", gaussian(c.num_classes, c.embed_dim, 1.0, rng)},
      {"input", gaussian(c.image_size, c.hidden1, in_scale, rng)},
      {"embed_to_hidden1", gaussian(c.embed_dim, c.hidden1, in_scale, rng)},
      {"bias1", Matrix(1, c.hidden1)},
      {"gain1", Matrix(c.embed_dim, c.hidden1)},
      {"hidden", gaussian(c.hidden1, c.hidden2, hidden_scale, rng)},
      {"embed_to_hidden2", gaussian(c.embed_dim, c.hidden2, hidden_scale, rng)},
      {"bias2", Matrix(1, c.hidden2)},
      {"gain2", Matrix(c.embed_dim, c.hidden2)},
      {"eps_weight", gaussian(c.hidden2, c.image_size, std::sqrt(1.0 / c.hidden2), rng)},
      {"eps_bias", Matrix(1, c.image_size)},
      {"gain_out", Matrix(c.embed_dim, c.image_size)},
      {"sketch_weight",
       gaussian(c.hidden1 + c.hidden2, c.image_size, std::sqrt(1.0 / (c.hidden1 + c.hidden2)), rng)},
      {"sketch_bias", Matrix(1, c.image_size)},
  };
}

DenoiserModel::DenoiserModel(DenoiserConfig config, const NoiseSchedule& schedule, ParameterSet params)
    : config_(config), params_(std::move(params)) {
  set_schedule(schedule);
  const auto shapes = expected_shapes(config_);
  if (params_.size() != shapes.size()) {
    throw ModelError("denoiser expects " + std::to_string(shapes.size()) + " tensors, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (params_[k].value.rows() != shapes[k].first || params_[k].value.cols() != shapes[k].second) {
      throw ModelError("denoiser tensor '" + params_[k].name + "' has the wrong shape");
    }
  }
}

void DenoiserModel::set_schedule(const NoiseSchedule& schedule) {
  if (schedule.steps() != config_.steps) throw ModelError("schedule and model disagree on step count");
  alpha_bar_.assign(schedule.alpha_bars().begin(), schedule.alpha_bars().end());
}

DenoiserModel::Precondition DenoiserModel::precondition(std::size_t t) const {
  const double ab = alpha_bar_[t - 1];
  const double sigma = std::sqrt((1.0 - ab) / ab);
  const double s2 = kDataScale * kDataScale;
  const double norm = std::sqrt(sigma * sigma + s2);
  return {1.0 / std::sqrt(ab), 1.0 / norm, sigma / (sigma * sigma + s2), -kDataScale / norm};
}

void DenoiserModel::check_inputs(const Matrix& z_t, std::span<const std::size_t> t,
                                 std::span<const std::size_t> labels) const {
  if (params_.size() != kSlotCount) throw ModelError("denoiser has no parameters");
  if (z_t.cols() != config_.image_size) throw ShapeError("denoiser input width mismatch");
  if (t.size() != z_t.rows() || labels.size() != z_t.rows()) {
    throw ShapeError("denoiser needs one timestep and one label per row");
  }
  for (std::size_t v : t) {
    if (v < 1 || v > config_.steps) throw ContractError("timestep out of range");
  }
  for (std::size_t v : labels) {
    if (v >= config_.num_classes) throw ContractError("class label out of range");
  }
}

DenoiserModel::Outputs DenoiserModel::forward(Tape& tape, std::span<const Var> bound,
                                              const Matrix& z_t, std::span<const std::size_t> t,
                                              std::span<const std::size_t> labels,
                                              bool with_sketch) const {
  check_inputs(z_t, t, labels);
  if (bound.size() != kSlotCount) throw ContractError("bound parameter list has the wrong length");
  std::vector<std::size_t> rows(t.begin(), t.end());
  for (auto& r : rows) r -= 1;
  const Var embed = tape.add(tape.gather_rows(bound[kTimeEmbed], rows),
                             tape.gather_rows(bound[kClassEmbed], {labels.begin(), labels.end()}));
  const std::size_t batch = z_t.rows();
  Matrix scaled(batch, config_.image_size), residual(batch, config_.image_size),
      head(batch, config_.image_size);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto p = precondition(t[r]);
    for (std::size_t i = 0; i < config_.image_size; ++i) {
      const double x = z_t(r, i) * p.inv_sqrt_alpha_bar;
      scaled(r, i) = p.c_in * (x - kDataMean);
      residual(r, i) = p.residual * (x - kDataMean);
      head(r, i) = p.head;
    }
  }
  const Var x = tape.constant(std::move(scaled));
  // a ⊙ (1 + e·G) + e·W
  auto film = [&](Var a, std::size_t gain, std::size_t shift) {
    const Var scaled_a = tape.add(a, tape.mul(a, tape.matmul(embed, bound[gain])));
    return shift == kSlotCount ? scaled_a : tape.add(scaled_a, tape.matmul(embed, bound[shift]));
  };
  const Var h1 = tape.relu(
      film(tape.add_row(tape.matmul(x, bound[kInput]), bound[kBias1]), kGain1, kEmbedToHidden1));
  Var h2 = tape.relu(
      film(tape.add_row(tape.matmul(h1, bound[kHidden]), bound[kBias2]), kGain2, kEmbedToHidden2));
  if (config_.hidden1 == config_.hidden2) h2 = tape.add(h1, h2);
  Outputs out;
  const Var f = film(tape.add_row(tape.matmul(h2, bound[kEpsWeight]), bound[kEpsBias]), kGainOut, kSlotCount);
  out.noise = tape.add(tape.constant(std::move(residual)), tape.mul(tape.constant(std::move(head)), f));
  if (with_sketch) {
    out.sketch = tape.sigmoid(
        tape.add_row(tape.matmul(tape.concat_cols(h1, h2), bound[kSketchWeight]), bound[kSketchBias]));
  }
  return out;
}

Matrix DenoiserModel::predict_noise(const Matrix& z_t, std::span<const std::size_t> t,
                                    std::span<const std::size_t> labels) const {
  check_inputs(z_t, t, labels);
  const std::size_t batch = z_t.rows();
  Matrix embed(batch, config_.embed_dim);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto te = params_[kTimeEmbed].value.row(t[r] - 1);
    const auto ce = params_[kClassEmbed].value.row(labels[r]);
    for (std::size_t k = 0; k < config_.embed_dim; ++k) embed(r, k) = te[k] + ce[k];
  }
  Matrix scaled(batch, config_.image_size);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto p = precondition(t[r]);
    for (std::size_t i = 0; i < config_.image_size; ++i) {
      scaled(r, i) = p.c_in * (z_t(r, i) * p.inv_sqrt_alpha_bar - kDataMean);
    }
  }
  auto film = [&](Matrix& a, std::size_t gain, const Matrix* shift) {
    const Matrix g = matmul(embed, params_[gain].value);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += a[i] * g[i];
    if (shift) a += *shift;
  };
  Matrix h1 = matmul(scaled, params_[kInput].value);
  add_row_inplace(h1, params_[kBias1].value);
  const Matrix shift1 = matmul(embed, params_[kEmbedToHidden1].value);
  film(h1, kGain1, &shift1);
  relu_inplace(h1);
  Matrix h2 = matmul(h1, params_[kHidden].value);
  add_row_inplace(h2, params_[kBias2].value);
  const Matrix shift2 = matmul(embed, params_[kEmbedToHidden2].value);
  film(h2, kGain2, &shift2);
  relu_inplace(h2);
  if (config_.hidden1 == config_.hidden2) h2 += h1;
  Matrix eps = matmul(h2, params_[kEpsWeight].value);
  add_row_inplace(eps, params_[kEpsBias].value);
  film(eps, kGainOut, nullptr);
  for (std::size_t r = 0; r < batch; ++r) {
    const auto p = precondition(t[r]);
    auto row = eps.row(r);
    for (std::size_t i = 0; i < row.size(); ++i) {
      row[i] = p.residual * (z_t(r, i) * p.inv_sqrt_alpha_bar - kDataMean) + p.head * row[i];
    }
  }
  return eps;
}

}  // namespace ltgen::synth
