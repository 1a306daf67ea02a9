// SPDX-License-Identifier: Apache-2.0

#include "ltgen/data/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ltgen/core/error.hpp"

namespace ltgen::data {
namespace {

constexpr std::array<std::string_view, kMaxClasses> kFamilies = {
    "disk",  "square", "triangle",     "cross",      "ring",      "two-bars",
    "dot-grid", "diamond", "x-cross", "t-shape", "stripes", "inverted-triangle",
    "half-disk", "l-shape", "small-dot", "checker"};

// Membership of the point (u, v), in shape-local units, for each family.
bool inside(std::size_t family, double u, double v) {
  const double au = std::abs(u);
  const double av = std::abs(v);
  const double r2 = u * u + v * v;
  switch (family) {
    case 0:  // disk
      return r2 <= 4.5 * 4.5;
    case 1:  // square
      return au <= 4.0 && av <= 4.0;
    case 2:  // triangle, apex up
      return v >= -4.5 && v <= 4.0 && au <= 4.75 * (v + 4.5) / 8.5;
    case 3:  // plus-shaped cross
      return (au <= 1.5 && av <= 5.0) || (av <= 1.5 && au <= 5.0);
    case 4:  // ring
      return r2 >= 3.0 * 3.0 && r2 <= 5.0 * 5.0;
    case 5:  // two vertical bars
      return au >= 2.0 && au <= 4.0 && av <= 5.0;
    case 6: {  // 3×3 dot grid
      const double gu = u - 3.5 * std::round(u / 3.5);
      const double gv = v - 3.5 * std::round(v / 3.5);
      return au <= 4.8 && av <= 4.8 && gu * gu + gv * gv <= 1.2 * 1.2;
    }
    case 7:  // diamond
      return au + av <= 5.5;
    case 8:  // diagonal cross
      return std::max(au, av) <= 4.5 && (std::abs(u - v) <= 2.0 || std::abs(u + v) <= 2.0);
    case 9:  // T shape
      return (std::abs(v + 3.5) <= 1.5 && au <= 5.0) || (au <= 1.5 && av <= 5.0);
    case 10:  // horizontal stripes
      return au <= 5.0 && av <= 5.0 &&
             static_cast<long>(std::floor((v + 5.0) / 2.5)) % 2 == 0;
    case 11:  // triangle, apex down
      return v <= 4.5 && v >= -4.0 && au <= 4.75 * (4.5 - v) / 8.5;
    case 12:  // lower half disk
      return r2 <= 5.0 * 5.0 && v >= -0.5;
    case 13:  // L shape
      return (u >= -4.0 && u <= -1.5 && av <= 5.0) || (v >= 2.5 && v <= 5.0 && au <= 4.0);
    case 14:  // small dot
      return r2 <= 2.0 * 2.0;
    case 15:  // two diagonal blocks
      return u * v > 0.0 && au <= 4.5 && av <= 4.5;
    default:
      throw ContractError("unknown shape family " + std::to_string(family));
  }
}

std::size_t reflect(long i, std::size_t n) {
  const long last = static_cast<long>(n) - 1;
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i > last) return static_cast<std::size_t>(2 * last - i);
  return static_cast<std::size_t>(i);
}

}  // namespace

std::string_view split_name(Split split) noexcept {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Image ImageSample::image() const noexcept {
  Image out;
  for (std::size_t i = 0; i < kPixels; ++i) out[i] = intensity(i);
  return out;
}

std::vector<std::size_t> LongTailProfile::class_counts() const {
  if (num_classes < 2 || num_classes > kMaxClasses) {
    throw ProfileError("num_classes must be in [2, 16], got " + std::to_string(num_classes));
  }
  if (head_count < 4 || head_count > 5000) {
    throw ProfileError("head_count must be in [4, 5000], got " + std::to_string(head_count));
  }
  if (!(imbalance_ratio >= 1.0) || !std::isfinite(imbalance_ratio)) {
    throw ProfileError("imbalance_ratio must be >= 1");
  }
  std::vector<std::size_t> counts(num_classes);
  const double last = static_cast<double>(num_classes - 1);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double n = static_cast<double>(head_count) *
                     std::pow(imbalance_ratio, -static_cast<double>(c) / last);
    counts[c] = static_cast<std::size_t>(std::llround(n));
    if (counts[c] < 4) {
      throw ProfileError("class " + std::to_string(c) + " would have " + std::to_string(counts[c]) +
                         " samples; at least 4 are needed for a 7:1:2 split");
    }
  }
  return counts;
}

std::vector<ImageSample> Dataset::split(Split which) const {
  std::vector<ImageSample> out;
  for (const auto& s : samples)
    if (s.split == which) out.push_back(s);
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& s : samples) ++counts[s.label];
  return counts;
}

std::vector<std::size_t> Dataset::class_counts(Split which) const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& s : samples)
    if (s.split == which) ++counts[s.label];
  return counts;
}

std::span<const std::string_view> shape_families() noexcept { return kFamilies; }

ShapeParams draw_shape_params(RngStream& rng) noexcept {
  ShapeParams p;
  p.center_x = 7.5 + rng.uniform(-2.0, 2.0);
  p.center_y = 7.5 + rng.uniform(-2.0, 2.0);
  p.scale = 1.0 + rng.uniform(-0.2, 0.2);
  p.intensity = 0.7 + rng.uniform(-0.2, 0.2);
  return p;
}

Image render_shape(std::size_t family, const ShapeParams& params) {
  constexpr int kSuper = 4;
  Image img{};
  for (std::size_t y = 0; y < kImageSide; ++y) {
    for (std::size_t x = 0; x < kImageSide; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSuper;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSuper;
          const double u = (px - 0.5 - params.center_x) / params.scale;
          const double v = (py - 0.5 - params.center_y) / params.scale;
          hits += inside(family, u, v) ? 1 : 0;
        }
      }
      img[y * kImageSide + x] = params.intensity * hits / double(kSuper * kSuper);
    }
  }
  return img;
}

std::array<std::size_t, 3> split_sizes(std::size_t n) {
  if (n < 4) throw ProfileError("a class needs at least 4 samples to split 7:1:2");
  const auto val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * 0.1)));
  const auto test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n * 0.2)));
  return {n - val - test, val, test};
}

Dataset generate_dataset(const LongTailProfile& profile, std::uint64_t seed) {
  const auto counts = profile.class_counts();
  Dataset d;
  d.num_classes = profile.num_classes;
  const RngStream root(seed, 0);
  for (std::size_t c = 0; c < counts.size(); ++c) {
    RngStream rng = root.substream(c);
    const auto sizes = split_sizes(counts[c]);
    for (std::size_t i = 0; i < counts[c]; ++i) {
      const ShapeParams params = draw_shape_params(rng);
      Image img = render_shape(c, params);
      ImageSample s;
      for (std::size_t p = 0; p < kPixels; ++p) {
        const double v = std::clamp(img[p] + kPixelNoiseSigma * rng.normal(), 0.0, 1.0);
        s.pixels[p] = static_cast<std::uint8_t>(std::lround(255.0 * v));
      }
      s.label = static_cast<std::uint8_t>(c);
      s.split = i < sizes[0] ? Split::kTrain : (i < sizes[0] + sizes[1] ? Split::kVal : Split::kTest);
      s.sketch = extract_sketch(s.image());
      d.samples.push_back(s);
    }
  }
  return d;
}

Sketch extract_sketch(const Image& pixels) {
  constexpr std::size_t n = kImageSide;
  std::array<double, kPixels> magnitude{};
  double peak = 0.0;
  auto at = [&](long y, long x) { return pixels[reflect(y, n) * n + reflect(x, n)]; };
  for (long y = 0; y < static_cast<long>(n); ++y) {
    for (long x = 0; x < static_cast<long>(n); ++x) {
      const double gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
      const double m = std::sqrt(gx * gx + gy * gy);
      magnitude[static_cast<std::size_t>(y) * n + static_cast<std::size_t>(x)] = m;
      peak = std::max(peak, m);
    }
  }
  Sketch sketch{};
  if (peak <= 1e-12) return sketch;
  const double threshold = 0.5 * peak;
  for (std::size_t i = 0; i < kPixels; ++i) sketch[i] = magnitude[i] >= threshold ? 1 : 0;
  return sketch;
}

Matrix to_matrix(std::span<const ImageSample> samples) {
  Matrix m(samples.size(), kPixels);
  for (std::size_t r = 0; r < samples.size(); ++r)
    for (std::size_t p = 0; p < kPixels; ++p) m(r, p) = samples[r].intensity(p);
  return m;
}

}  // namespace ltgen::data
