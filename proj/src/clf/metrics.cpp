// SPDX-License-Identifier: Apache-2.0

#include "ltgen/clf/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "ltgen/core/error.hpp"
#include "ltgen/core/linalg.hpp"

namespace ltgen::clf {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : classes_(num_classes), counts_(num_classes * num_classes, 0) {}

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const std::size_t> truth,
                                                  std::span<const std::size_t> predicted,
                                                  std::size_t num_classes) {
  if (truth.size() != predicted.size()) throw ShapeError("one prediction per label");
  ConfusionMatrix m(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) m.add(truth[i], predicted[i]);
  return m;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted) {
  if (truth >= classes_ || predicted >= classes_) throw ContractError("confusion entry out of range");
  ++counts_[truth * classes_ + predicted];
  ++total_;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t t = 0;
  for (std::size_t c = 0; c < classes_; ++c) t += at(c, c);
  return t;
}

std::vector<ShotGroup> assign_shot_groups(std::span<const std::size_t> train_counts,
                                          const ShotThresholds& thresholds) {
  if (thresholds.few_max >= thresholds.many_min) throw ConfigError("few_max must be below many_min");
  std::vector<ShotGroup> groups;
  groups.reserve(train_counts.size());
  for (std::size_t n : train_counts) {
    if (n >= thresholds.many_min) {
      groups.push_back(ShotGroup::kMany);
    } else if (n <= thresholds.few_max) {
      groups.push_back(ShotGroup::kFew);
    } else {
      groups.push_back(ShotGroup::kMedium);
    }
  }
  return groups;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

MetricsReport compute_metrics(const ConfusionMatrix& confusion, std::span<const ShotGroup> groups,
                              AllMode all_mode) {
  const std::size_t c = confusion.num_classes();
  if (groups.size() != c) throw ShapeError("one shot group per class");
  if (confusion.total() == 0) throw ContractError("metrics over an empty split");

  MetricsReport r;
  r.samples = confusion.total();
  r.class_recall.resize(c);
  double pre = 0.0, rec = 0.0, f1 = 0.0;
  std::array<double, 3> group_sum{};
  std::array<std::size_t, 3> group_size{};
  for (std::size_t k = 0; k < c; ++k) {
    double tp = static_cast<double>(confusion.at(k, k));
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row += static_cast<double>(confusion.at(k, j));
      col += static_cast<double>(confusion.at(j, k));
    }
    const double p = ratio(tp, col);
    const double q = ratio(tp, row);
    pre += p;
    rec += q;
    f1 += ratio(2.0 * p * q, p + q);
    r.class_recall[k] = 100.0 * q;
    const auto g = static_cast<std::size_t>(groups[k]);
    group_sum[g] += q;
    ++group_size[g];
  }
  const double n = static_cast<double>(c);
  r.precision = 100.0 * pre / n;
  r.recall = 100.0 * rec / n;
  r.f1 = 100.0 * f1 / n;
  r.all = all_mode == AllMode::kSample
              ? 100.0 * static_cast<double>(confusion.trace()) / static_cast<double>(confusion.total())
              : r.recall;
  auto group_value = [&](ShotGroup g) -> std::optional<double> {
    const auto i = static_cast<std::size_t>(g);
    if (group_size[i] == 0) return std::nullopt;
    return 100.0 * group_sum[i] / static_cast<double>(group_size[i]);
  };
  r.many = group_value(ShotGroup::kMany);
  r.medium = group_value(ShotGroup::kMedium);
  r.few = group_value(ShotGroup::kFew);
  return r;
}

GaussianFit fit_gaussian(const Matrix& rows) {
  const std::size_t n = rows.rows(), d = rows.cols();
  if (n < 2) throw ContractError("a Gaussian fit needs at least two rows");
  GaussianFit fit{std::vector<double>(d, 0.0), {}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) fit.mean[k] += rows(i, k);
  for (double& m : fit.mean) m /= static_cast<double>(n);
  Matrix centred(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) centred(i, k) = rows(i, k) - fit.mean[k];
  fit.covariance = (1.0 / static_cast<double>(n - 1)) * matmul_tn(centred, centred);
  return fit;
}

namespace {

Matrix symmetrised(const Matrix& m) {
  Matrix s(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s(i, j) = 0.5 * (m(i, j) + m(j, i));
  return s;
}

}  // namespace

double frechet_distance(const Matrix& a, const Matrix& b, double shrinkage) {
  if (a.cols() != b.cols()) throw ShapeError("frechet_distance: feature widths differ");
  if (shrinkage < 0.0) throw ConfigError("shrinkage must be non-negative");
  const std::size_t d = a.cols();
  if (shrinkage == 0.0 && (a.rows() <= d || b.rows() <= d)) {
    throw NumericError("covariance is singular without shrinkage: need more than d rows per set");
  }
  GaussianFit fa = fit_gaussian(a);
  GaussianFit fb = fit_gaussian(b);
  for (std::size_t k = 0; k < d; ++k) {
    fa.covariance(k, k) += shrinkage;
    fb.covariance(k, k) += shrinkage;
  }
  double mean_term = 0.0;
  for (std::size_t k = 0; k < d; ++k) mean_term += (fa.mean[k] - fb.mean[k]) * (fa.mean[k] - fb.mean[k]);

  const Matrix root_a = sqrtm_psd(fa.covariance);
  const Matrix inner = symmetrised(matmul(matmul(root_a, fb.covariance), root_a));
  const Matrix cross = sqrtm_psd(inner);
  double trace = 0.0;
  for (std::size_t k = 0; k < d; ++k) trace += fa.covariance(k, k) + fb.covariance(k, k) - 2.0 * cross(k, k);
  const double fd = mean_term + trace;
  if (!std::isfinite(fd)) throw NumericError("non-finite Fréchet distance");
  return std::max(0.0, fd);
}

}  // namespace ltgen::clf
