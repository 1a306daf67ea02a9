// SPDX-License-Identifier: Apache-2.0

#include "ltgen/core/io.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "ltgen/core/error.hpp"

namespace ltgen {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
  return static_cast<std::uint32_t>(
      ::crc32_z(::crc32(0L, Z_NULL, 0), bytes.data(), bytes.size()));
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 digest failed for " + path.string());
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DependencyError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::magic(std::string_view tag) {
  bytes_.insert(bytes_.end(), tag.begin(), tag.end());
}

void ByteReader::need(std::size_t n) const {
  if (remaining() < n) {
    throw CorruptionError("payload truncated: need " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_) + ", have " + std::to_string(remaining()));
  }
}

std::uint8_t ByteReader::u8() {
  need(1);
  return bytes_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto out = bytes_.subspan(pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::expect_magic(std::string_view tag) {
  if (remaining() < tag.size() ||
      std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
    throw FormatError("bad magic: expected \"" + std::string(tag) + "\"");
  }
  pos_ += tag.size();
}

void put_matrix(ByteWriter& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) w.f64(v);
}

Matrix get_matrix(ByteReader& r) {
  constexpr std::size_t kMaxTensorElems = std::size_t{1} << 26;
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  if (rows * cols > kMaxTensorElems || rows * cols * 8 > r.remaining()) {
    throw CorruptionError("tensor of " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " exceeds the payload");
  }
  std::vector<double> data(rows * cols);
  for (double& v : data) v = r.f64();
  try {
    return Matrix(rows, cols, std::move(data));
  } catch (const NumericError&) {
    throw CorruptionError("tensor contains non-finite values");
  }
}

void seal(ByteWriter& w) {
  const auto& bytes = w.bytes();
  w.u32(crc32(bytes));
}

std::span<const std::uint8_t> unseal(std::span<const std::uint8_t> bytes, std::string_view magic) {
  if (bytes.size() < magic.size()) throw FormatError("file too short");
  ByteReader head(bytes.first(magic.size()));
  head.expect_magic(magic);
  if (bytes.size() < magic.size() + 4) throw CorruptionError("file truncated");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (tail.u32() != crc32(body)) throw CorruptionError("CRC32 mismatch");
  return body;
}

}  // namespace ltgen
