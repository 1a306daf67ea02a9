// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "ltgen/core/matrix.hpp"
#include "ltgen/core/rng.hpp"

namespace ltgen::data {

inline constexpr std::size_t kImageSide = 16;
inline constexpr std::size_t kPixels = kImageSide * kImageSide;
inline constexpr std::size_t kMaxClasses = 16;

using Image = std::array<double, kPixels>;
using Sketch = std::array<std::uint8_t, kPixels>;

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

std::string_view split_name(Split split) noexcept;

/// One labelled image. Pixels are stored as 8-bit levels so the on-disk
/// format round-trips exactly; intensity(i) = pixels[i] / 255.
struct ImageSample {
  std::array<std::uint8_t, kPixels> pixels{};
  Sketch sketch{};
  std::uint8_t label = 0;
  Split split = Split::kTrain;

  double intensity(std::size_t i) const noexcept { return pixels[i] / 255.0; }
  Image image() const noexcept;

  friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

/// Power-law class-count profile: n_c = round(n_max · ρ^(-c/(C-1))).
struct LongTailProfile {
  std::size_t num_classes = 8;
  std::size_t head_count = 1000;
  double imbalance_ratio = 47.98;

  /// Throws ProfileError when the profile is out of range or a class would
  /// end up with fewer than 4 samples.
  std::vector<std::size_t> class_counts() const;
};

struct Dataset {
  std::size_t num_classes = 0;
  std::vector<ImageSample> samples;

  std::vector<ImageSample> split(Split which) const;
  std::vector<std::size_t> class_counts() const;
  std::vector<std::size_t> class_counts(Split which) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Per-sample jitter of the rendered shape.
struct ShapeParams {
  double center_x = 7.5;
  double center_y = 7.5;
  double scale = 1.0;
  double intensity = 0.7;
};

inline constexpr double kPixelNoiseSigma = 0.05;

/// Shape family names, index = class id.
std::span<const std::string_view> shape_families() noexcept;

/// Center ±2 px, scale ±20 %, intensity ±0.2 around the nominal values.
ShapeParams draw_shape_params(RngStream& rng) noexcept;

/// Noise-free anti-aliased render of one family (4×4 supersampling).
Image render_shape(std::size_t family, const ShapeParams& params);

/// Split sizes for one class: val = max(1, round(n/10)), test = max(1, round(n/5)),
/// train gets the remainder (7:1:2).
std::array<std::size_t, 3> split_sizes(std::size_t n);

/// Deterministic long-tailed dataset; class c draws from RNG stream c.
Dataset generate_dataset(const LongTailProfile& profile, std::uint64_t seed);

/// 3×3 Sobel magnitude with reflect padding, thresholded at half the image's
/// maximum magnitude. A constant image yields an all-zero sketch.
Sketch extract_sketch(const Image& pixels);

/// Flattened images of a sample list, one row per sample, values in [0,1].
Matrix to_matrix(std::span<const ImageSample> samples);

/// Binary "LTG1" file; see README for the byte layout.
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);

}  // namespace ltgen::data
