#pragma once

// Small text and binary encoding helpers shared by job records, broadcast
// payloads and the weight file.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrdl/error.hpp"

namespace mrdl::codec {

/// Shortest decimal text that parses back to exactly `x`.
std::string format_real(double x);
/// Strict parse of a whole token; throws FormatError.
double parse_real(std::string_view text);
std::uint64_t parse_uint(std::string_view text);

/// Space-separated decimals with a trailing space, one per value.
std::string format_reals(std::span<const double> values);
std::vector<double> parse_reals(std::string_view text);

/// Little-endian binary writer.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put(bits);
  }
  void f64s(std::span<const double> values) {
    for (double v : values) f64(v);
  }
  void bytes(std::string_view b) { out_.append(b); }

  const std::string& str() const noexcept { return out_; }
  std::string take() { return std::move(out_); }

 private:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

/// Little-endian binary reader; throws TruncationError past the end.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() {
    std::uint64_t bits = get<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  void f64s(std::span<double> out) {
    for (double& v : out) v = f64();
  }
  std::string_view take(std::size_t n) {
    if (n > data_.size() - pos_) throw TruncationError("unexpected end of data", data_.size());
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  template <typename U>
  U get() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace mrdl::codec
