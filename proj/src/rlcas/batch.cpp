// SPDX-License-Identifier: Apache-2.0

#include "ltgen/rlcas/batch.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ltgen/core/error.hpp"

namespace ltgen::rlcas {

std::vector<std::size_t> LabeledImages::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t l : labels) ++counts.at(l);
  return counts;
}

LabeledImages from_samples(std::span<const data::ImageSample> samples, std::size_t num_classes) {
  LabeledImages out{data::to_matrix(samples), {}, num_classes};
  out.labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.label >= num_classes) throw ContractError("sample label out of range");
    out.labels.push_back(s.label);
  }
  return out;
}

std::vector<std::size_t> Batch::synthetic_histogram(std::size_t num_classes) const {
  std::vector<std::size_t> hist(num_classes, 0);
  for (std::size_t r = real_count; r < labels.size(); ++r) ++hist.at(labels[r]);
  return hist;
}

std::vector<std::vector<std::size_t>> plan_real_batches(const LabeledImages& real,
                                                        std::size_t real_per_batch,
                                                        bool class_balanced, RngStream& rng) {
  const std::size_t n = real.size();
  if (n == 0) throw ContractError("no real training rows");
  if (real_per_batch == 0) throw ConfigError("real rows per batch must be positive");
  const std::size_t batches = (n + real_per_batch - 1) / real_per_batch;
  std::vector<std::vector<std::size_t>> plan(batches);

  if (class_balanced) {
    std::vector<std::vector<std::size_t>> by_class(real.num_classes);
    for (std::size_t i = 0; i < n; ++i) by_class[real.labels[i]].push_back(i);
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < by_class.size(); ++c)
      if (!by_class[c].empty()) present.push_back(c);
    for (auto& b : plan) {
      b.resize(real_per_batch);
      for (auto& row : b) {
        const auto& rows = by_class[present[rng.index(present.size())]];
        row = rows[rng.index(rows.size())];
      }
    }
    return plan;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t begin = b * real_per_batch;
    const std::size_t end = std::min(n, begin + real_per_batch);
    plan[b].assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
    while (plan[b].size() < real_per_batch) plan[b].push_back(rng.index(n));
  }
  return plan;
}

Batch compose_batch(std::span<const int> state, std::span<const std::size_t> real_rows,
                    const LabeledImages& real, const synth::SynthPool& pool, RngStream& rng) {
  if (state.size() != real.num_classes) throw ShapeError("state length differs from class count");
  std::size_t synthetic = 0;
  for (std::size_t c = 0; c < state.size(); ++c) {
    if (state[c] < 0) throw ContractError("negative synthetic count");
    if (state[c] == 0) continue;
    if (c >= pool.num_classes() || pool.size(c) < static_cast<std::size_t>(state[c])) {
      throw PoolError("synthetic pool for class " + std::to_string(c) + " holds " +
                      std::to_string(c < pool.num_classes() ? pool.size(c) : 0) + " images, batch needs " +
                      std::to_string(state[c]));
    }
    synthetic += static_cast<std::size_t>(state[c]);
  }

  Batch batch;
  batch.real_count = real_rows.size();
  batch.images = Matrix(real_rows.size() + synthetic, data::kPixels);
  batch.labels.reserve(batch.images.rows());
  std::size_t out = 0;
  for (std::size_t row : real_rows) {
    if (row >= real.size()) throw ContractError("real row index out of range");
    std::ranges::copy(real.images.row(row), batch.images.row(out++).begin());
    batch.labels.push_back(real.labels[row]);
  }
  std::vector<std::size_t> picks;
  for (std::size_t c = 0; c < state.size(); ++c) {
    const auto need = static_cast<std::size_t>(state[c]);
    if (need == 0) continue;
    // Partial Fisher-Yates: the first `need` entries are a uniform draw without replacement.
    picks.resize(pool.size(c));
    std::iota(picks.begin(), picks.end(), std::size_t{0});
    for (std::size_t k = 0; k < need; ++k) std::swap(picks[k], picks[k + rng.index(picks.size() - k)]);
    for (std::size_t k = 0; k < need; ++k) {
      std::ranges::copy(pool.images[c].row(picks[k]), batch.images.row(out++).begin());
      batch.labels.push_back(c);
    }
  }
  return batch;
}

}  // namespace ltgen::rlcas
