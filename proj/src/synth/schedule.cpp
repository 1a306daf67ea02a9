// SPDX-License-Identifier: Apache-2.0

#include "ltgen/synth/schedule.hpp"

#include <cmath>
#include <string>

#include "ltgen/core/error.hpp"

namespace ltgen::synth {

std::size_t NoiseSchedule::check(std::size_t t) const {
  if (t < 1 || t > beta_.size()) {
    throw ContractError("timestep " + std::to_string(t) + " outside [1, " +
                        std::to_string(beta_.size()) + "]");
  }
  return t - 1;
}

double NoiseSchedule::posterior_variance(std::size_t t) const {
  return beta(t) * (1.0 - alpha_bar_prev(t)) / (1.0 - alpha_bar(t));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  NoiseSchedule s;
  s.beta_ = std::move(betas);
  s.alpha_bar_.resize(s.beta_.size());
  double running = 1.0;
  for (std::size_t i = 0; i < s.beta_.size(); ++i) {
    if (!(s.beta_[i] > 0.0 && s.beta_[i] < 1.0)) throw ConfigError("beta outside (0, 1)");
    running *= 1.0 - s.beta_[i];
    s.alpha_bar_[i] = running;
  }
  return s;
}

NoiseSchedule build_schedule(std::size_t steps, double beta_min, double beta_max) {
  if (steps < 2) throw ConfigError("diffusion needs at least 2 steps");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0)) {
    throw ConfigError("beta range must satisfy 0 < beta_min <= beta_max < 1");
  }
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    betas[i] = beta_min + (beta_max - beta_min) * static_cast<double>(i) / static_cast<double>(steps - 1);
  }
  return NoiseSchedule::from_betas(std::move(betas));
}

Matrix forward_diffuse(const Matrix& z0, std::span<const std::size_t> t, const Matrix& noise,
                       const NoiseSchedule& schedule) {
  if (!z0.same_shape(noise)) throw ShapeError("forward_diffuse: noise shape differs from z0");
  if (t.size() != z0.rows()) throw ShapeError("forward_diffuse: one timestep per row");
  Matrix out(z0.rows(), z0.cols());
  for (std::size_t r = 0; r < z0.rows(); ++r) {
    const double ab = schedule.alpha_bar(t[r]);
    const double signal = std::sqrt(ab);
    const double spread = std::sqrt(1.0 - ab);
    for (std::size_t c = 0; c < z0.cols(); ++c) out(r, c) = signal * z0(r, c) + spread * noise(r, c);
  }
  return out;
}

Matrix forward_diffuse(const Matrix& z0, std::size_t t, const Matrix& noise,
                       const NoiseSchedule& schedule) {
  const std::vector<std::size_t> steps(z0.rows(), t);
  schedule.alpha_bar(t);  // range check even for an empty batch
  return forward_diffuse(z0, steps, noise, schedule);
}

}  // namespace ltgen::synth
