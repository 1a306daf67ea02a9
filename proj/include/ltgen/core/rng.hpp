// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace ltgen {

/// Philox4x32-10 block function: maps (key, counter) to four 32-bit words.
/// Pure, so any block of any stream can be recomputed independently.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 2> key,
                                        std::array<std::uint32_t, 4> counter) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Reproducible random stream keyed by (seed, stream id). The seed is the
/// Philox key and the stream id occupies the upper half of the counter, so
/// distinct stream ids never share a block.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) noexcept;

  /// Independent child stream, e.g. one per class or per episode.
  RngStream substream(std::uint64_t id) const noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  /// Unbiased integer in [0, n); n must be positive.
  std::size_t index(std::size_t n) noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[index(i)]);
    }
  }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  unsigned used_ = 4;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ltgen
