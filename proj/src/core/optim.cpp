// SPDX-License-Identifier: Apache-2.0

#include "ltgen/core/optim.hpp"

#include <cmath>

#include "ltgen/core/error.hpp"

namespace ltgen {

Adam::Adam(AdamConfig config, const ParameterSet& params) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.value.rows(), p.value.cols());
    v_.emplace_back(p.value.rows(), p.value.cols());
  }
}

void Adam::step(ParameterSet& params, std::span<const Matrix> grads) {
  if (params.size() != grads.size()) throw ShapeError("Adam: one gradient per parameter");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& w = params[k].value;
    const Matrix& g = grads[k];
    if (!w.same_shape(g) || !w.same_shape(m_[k])) throw ShapeError("Adam: gradient shape mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[k][i] = config_.beta1 * m_[k][i] + (1.0 - config_.beta1) * g[i];
      v_[k][i] = config_.beta2 * v_[k][i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m_[k][i] / c1;
      const double vhat = v_[k][i] / c2;
      w[i] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * w[i]);
    }
  }
}

void Adam::step(std::span<Matrix> params, std::span<const Matrix> grads) {
  ParameterSet wrapped;
  wrapped.reserve(params.size());
  for (auto& p : params) wrapped.push_back({{}, std::move(p)});
  if (m_.empty()) *this = Adam(config_, wrapped);
  step(wrapped, grads);
  for (std::size_t k = 0; k < params.size(); ++k) params[k] = std::move(wrapped[k].value);
}

}  // namespace ltgen
