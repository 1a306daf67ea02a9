// SPDX-License-Identifier: Apache-2.0

// LTG1 layout (little-endian):
//   "LTG1" | u32 C | u32 side | u32 count[C] | u32 split_count[3]
//   | u8 label[N] | u8 split[N] | u8 pixels[N][side²] | sketch bits[N][side²/8]
// Sketch bits are row-major, most significant bit first.

#include <string>

#include "ltgen/core/error.hpp"
#include "ltgen/core/io.hpp"
#include "ltgen/data/shapes.hpp"

namespace ltgen::data {
namespace {

constexpr std::string_view kMagic = "LTG1";
constexpr std::size_t kSketchBytes = kPixels / 8;

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  ByteWriter w;
  w.magic(kMagic);
  w.u32(static_cast<std::uint32_t>(dataset.num_classes));
  w.u32(static_cast<std::uint32_t>(kImageSide));
  for (std::size_t n : dataset.class_counts()) w.u32(static_cast<std::uint32_t>(n));
  std::array<std::uint32_t, 3> per_split{};
  for (const auto& s : dataset.samples) ++per_split[static_cast<std::size_t>(s.split)];
  for (auto n : per_split) w.u32(n);
  for (const auto& s : dataset.samples) w.u8(s.label);
  for (const auto& s : dataset.samples) w.u8(static_cast<std::uint8_t>(s.split));
  for (const auto& s : dataset.samples) w.raw(s.pixels);
  for (const auto& s : dataset.samples) {
    for (std::size_t b = 0; b < kSketchBytes; ++b) {
      std::uint8_t byte = 0;
      for (std::size_t bit = 0; bit < 8; ++bit) {
        if (s.sketch[b * 8 + bit] != 0) byte |= static_cast<std::uint8_t>(0x80u >> bit);
      }
      w.u8(byte);
    }
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic);
  Dataset d;
  d.num_classes = r.u32();
  if (d.num_classes == 0 || d.num_classes > kMaxClasses) {
    throw CorruptionError("dataset header declares " + std::to_string(d.num_classes) + " classes");
  }
  const std::uint32_t side = r.u32();
  if (side != kImageSide) {
    throw FormatError("unsupported image side " + std::to_string(side));
  }
  std::vector<std::size_t> counts(d.num_classes);
  std::size_t total = 0;
  for (auto& n : counts) {
    n = r.u32();
    total += n;
  }
  std::array<std::size_t, 3> per_split{};
  std::size_t split_total = 0;
  for (auto& n : per_split) {
    n = r.u32();
    split_total += n;
  }
  if (split_total != total) {
    throw CorruptionError("split counts sum to " + std::to_string(split_total) +
                          " but class counts sum to " + std::to_string(total));
  }
  const std::size_t expected = total * (2 + kPixels + kSketchBytes);
  if (r.remaining() != expected) {
    throw CorruptionError("payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                          std::to_string(expected));
  }

  d.samples.resize(total);
  const auto labels = r.raw(total);
  const auto splits = r.raw(total);
  std::vector<std::size_t> seen(d.num_classes, 0);
  std::array<std::size_t, 3> seen_split{};
  for (std::size_t i = 0; i < total; ++i) {
    if (labels[i] >= d.num_classes) throw CorruptionError("label out of range at sample " + std::to_string(i));
    if (splits[i] > 2) throw CorruptionError("split tag out of range at sample " + std::to_string(i));
    d.samples[i].label = labels[i];
    d.samples[i].split = static_cast<Split>(splits[i]);
    ++seen[labels[i]];
    ++seen_split[splits[i]];
  }
  if (seen != counts) throw CorruptionError("label histogram disagrees with header class counts");
  if (seen_split != per_split) throw CorruptionError("split histogram disagrees with header");
  for (auto& s : d.samples) {
    const auto px = r.raw(kPixels);
    std::copy(px.begin(), px.end(), s.pixels.begin());
  }
  for (auto& s : d.samples) {
    const auto packed = r.raw(kSketchBytes);
    for (std::size_t p = 0; p < kPixels; ++p) {
      s.sketch[p] = (packed[p / 8] >> (7 - p % 8)) & 1u;
    }
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file(path, encode_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

}  // namespace ltgen::data
