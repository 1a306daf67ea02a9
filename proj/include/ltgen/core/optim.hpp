// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ltgen/core/matrix.hpp"
#include "ltgen/core/tape.hpp"

namespace ltgen {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled (AdamW) decay; zero gives plain Adam.
  double weight_decay = 0.0;
};

/// Adaptive moment estimation with optional decoupled weight decay.
/// Descends: callers maximising an objective pass the negated gradient.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, const ParameterSet& params);

  void step(ParameterSet& params, std::span<const Matrix> grads);
  void step(std::span<Matrix> params, std::span<const Matrix> grads);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t steps() const noexcept { return t_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t t_ = 0;
};

}  // namespace ltgen
