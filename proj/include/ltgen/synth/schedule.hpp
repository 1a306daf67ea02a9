// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ltgen/core/matrix.hpp"

namespace ltgen::synth {

/// Linear-β DDPM noise schedule. Timesteps are 1-based: t ∈ [1, T].
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  std::size_t steps() const noexcept { return beta_.size(); }
  double beta(std::size_t t) const { return beta_.at(check(t)); }
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(check(t)); }
  /// ᾱ_{t-1}, with ᾱ_0 = 1.
  double alpha_bar_prev(std::size_t t) const { return t == 1 ? 1.0 : alpha_bar(t - 1); }
  /// β̃_t = β_t (1 - ᾱ_{t-1}) / (1 - ᾱ_t).
  double posterior_variance(std::size_t t) const;

  std::span<const double> betas() const noexcept { return beta_; }
  std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

  /// Rebuilds ᾱ from a β table (checkpoint loading).
  static NoiseSchedule from_betas(std::vector<double> betas);

 private:
  std::size_t check(std::size_t t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
};

/// Linear interpolation of β over T steps. Throws ConfigError unless T ≥ 2
/// and 0 < β_min ≤ β_max < 1.
NoiseSchedule build_schedule(std::size_t steps, double beta_min, double beta_max);

/// z_t = √ᾱ_t · z_0 + √(1-ᾱ_t) · ε, one timestep per row of z_0.
Matrix forward_diffuse(const Matrix& z0, std::span<const std::size_t> t, const Matrix& noise,
                       const NoiseSchedule& schedule);
/// Single timestep for every row.
Matrix forward_diffuse(const Matrix& z0, std::size_t t, const Matrix& noise,
                       const NoiseSchedule& schedule);

}  // namespace ltgen::synth
