// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ltgen/core/matrix.hpp"

namespace ltgen {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;
/// Lower-case hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary and renames, so readers never observe a
/// partially written artifact.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Little-endian serializer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void magic(std::string_view tag);

  const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
  std::vector<std::uint8_t> take() noexcept { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Little-endian reader. Reading past the end raises CorruptionError.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::span<const std::uint8_t> raw(std::size_t n);
  /// FormatError when the next bytes differ from `tag`.
  void expect_magic(std::string_view tag);

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  void need(std::size_t n) const;

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

/// Matrix as u32 rows, u32 cols, then row-major f64 values.
void put_matrix(ByteWriter& w, const Matrix& m);
/// CorruptionError when the shape exceeds the payload or a value is not finite.
Matrix get_matrix(ByteReader& r);
/// Appends the CRC32 of everything written so far.
void seal(ByteWriter& w);
/// Checks the leading magic (FormatError) and trailing CRC32 (CorruptionError);
/// returns the bytes before the CRC.
std::span<const std::uint8_t> unseal(std::span<const std::uint8_t> bytes, std::string_view magic);

}  // namespace ltgen
