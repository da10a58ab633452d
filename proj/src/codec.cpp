#include "mrdl/codec.hpp"

#include <charconv>

namespace mrdl::codec {

std::string format_real(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

double parse_real(std::string_view text) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw FormatError("not a real number: '" + std::string(text) + "'", 0);
  }
  return v;
}

std::uint64_t parse_uint(std::string_view text) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw FormatError("not an unsigned integer: '" + std::string(text) + "'", 0);
  }
  return v;
}

std::string format_reals(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 20);
  char buf[64];
  for (double v : values) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, end);
    out.push_back(' ');
  }
  return out;
}

std::vector<double> parse_reals(std::string_view text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    if (text[pos] == ' ') {
      ++pos;
      continue;
    }
    double v = 0.0;
    auto [end, ec] = std::from_chars(text.data() + pos, text.data() + text.size(), v);
    if (ec != std::errc()) throw FormatError("bad real in list", pos);
    const std::size_t next = static_cast<std::size_t>(end - text.data());
    if (next < text.size() && text[next] != ' ') throw FormatError("bad separator in list", next);
    out.push_back(v);
    pos = next;
  }
  return out;
}

}  // namespace mrdl::codec
