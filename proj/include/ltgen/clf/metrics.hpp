// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ltgen/core/matrix.hpp"

namespace ltgen::clf {

/// C×C counts, rows = truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes = 0);
  static ConfusionMatrix from_predictions(std::span<const std::size_t> truth,
                                          std::span<const std::size_t> predicted, std::size_t num_classes);

  void add(std::size_t truth, std::size_t predicted);
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  std::size_t num_classes() const noexcept { return classes_; }
  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t trace() const noexcept;

 private:
  std::size_t classes_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

enum class ShotGroup : std::uint8_t { kMany, kMedium, kFew };

/// Many = train count ≥ many_min, Few = train count ≤ few_max, Medium otherwise.
struct ShotThresholds {
  std::size_t many_min = 100;
  std::size_t few_max = 20;
};

std::vector<ShotGroup> assign_shot_groups(std::span<const std::size_t> train_counts,
                                          const ShotThresholds& thresholds = {});

/// Sample accuracy or mean per-class recall for the "All" column.
enum class AllMode { kSample, kClassMean };

/// Percentages in [0,100]. A shot group with no classes has no value.
struct MetricsReport {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double all = 0.0;
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
  std::vector<double> class_recall;
  std::uint64_t samples = 0;
};

MetricsReport compute_metrics(const ConfusionMatrix& confusion, std::span<const ShotGroup> groups,
                              AllMode all_mode = AllMode::kSample);

/// Fréchet distance between Gaussian fits of two row sets:
/// ‖μa − μb‖² + Tr(Σa + Σb − 2(Σa^½ Σb Σa^½)^½), with Σ ← Σ + shrinkage·I.
/// NumericError when shrinkage is zero and a set has no more rows than columns.
double frechet_distance(const Matrix& a, const Matrix& b, double shrinkage = 1e-6);

/// Column means and unbiased covariance of the rows.
struct GaussianFit {
  std::vector<double> mean;
  Matrix covariance;
};

GaussianFit fit_gaussian(const Matrix& rows);

}  // namespace ltgen::clf
