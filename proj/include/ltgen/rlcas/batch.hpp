// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ltgen/core/matrix.hpp"
#include "ltgen/core/rng.hpp"
#include "ltgen/synth/synthesizer.hpp"

namespace ltgen::rlcas {

/// Synthetic images per class in one mini-batch.
using SamplerState = std::vector<int>;

/// Row-aligned images (n×256) and labels.
struct LabeledImages {
  Matrix images;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::vector<std::size_t> class_counts() const;
};

LabeledImages from_samples(std::span<const data::ImageSample> samples, std::size_t num_classes);

struct Batch {
  Matrix images;
  std::vector<std::size_t> labels;
  std::size_t real_count = 0;  ///< the first real_count rows are real

  std::size_t size() const noexcept { return labels.size(); }
  /// Per-class counts of the synthetic rows.
  std::vector<std::size_t> synthetic_histogram(std::size_t num_classes) const;
};

/// Real rows for one classifier epoch: ⌈n/real_per_batch⌉ batches of exactly
/// real_per_batch indices. Empirical mode walks a fresh permutation and tops
/// up the last batch with uniform draws; balanced mode picks a class
/// uniformly, then a row of that class.
std::vector<std::vector<std::size_t>> plan_real_batches(const LabeledImages& real,
                                                        std::size_t real_per_batch,
                                                        bool class_balanced, RngStream& rng);

/// Real rows followed by exactly state[c] pool images of class c, drawn
/// without replacement within the batch. PoolError if a class pool is short.
Batch compose_batch(std::span<const int> state, std::span<const std::size_t> real_rows,
                    const LabeledImages& real, const synth::SynthPool& pool, RngStream& rng);

}  // namespace ltgen::rlcas
