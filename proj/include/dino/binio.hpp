#pragma once

// Little-endian byte encoding for the weight and checkpoint files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dino/errors.hpp"

namespace dino::binio {


class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { bytes_.push_back(v); }
  void put_u32(std::uint32_t v) { put_le(v); }
  void put_u64(std::uint64_t v) { put_le(v); }
  void put_f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void put_raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_raw(std::span<const std::uint8_t> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  void put_string(std::string_view s) {
    put_u64(s.size());
    put_raw(s);
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  template <class U>
  void put_le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> bytes_;
};

// Reads from a byte span; every failure reports the absolute file offset
// (base + position inside the span).
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes, std::uint64_t base_offset = 0)
      : bytes_(bytes), base_(base_offset) {}

  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le<std::uint8_t>("u8")); }
  std::uint32_t get_u32() { return get_le<std::uint32_t>("u32"); }
  std::uint64_t get_u64() { return get_le<std::uint64_t>("u64"); }
  float get_f32() { return std::bit_cast<float>(get_le<std::uint32_t>("f32")); }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>("f64")); }

  std::span<const std::uint8_t> get_raw(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::string get_string(const char* what) {
    const auto n = get_u64();
    auto raw = get_raw(static_cast<std::size_t>(n), what);
    return std::string(raw.begin(), raw.end());
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint64_t offset() const { return base_ + pos_; }

  [[noreturn]] void fail(const std::string& what) const { throw FormatError(offset(), what); }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(base_ + bytes_.size(), std::string("truncated file while reading ") + what);
    }
  }

  template <class U>
  U get_le(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint64_t base_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);

// Writes to path.tmp then renames, so readers never see a partial file.
void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace dino::binio
