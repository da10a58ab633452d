#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mrdl/codec.hpp"
#include "mrdl/error.hpp"

using namespace mrdl;

TEST_CASE("reals survive text round trips exactly") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> dist(0.0, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = dist(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(codec::parse_real(codec::format_real(x)) == x);
  }
  CHECK(codec::format_real(0.5) == "0.5");
  CHECK(codec::parse_real("-0.05") == -0.05);
}

TEST_CASE("parse_real is strict") {
  CHECK_THROWS_AS(codec::parse_real(""), FormatError);
  CHECK_THROWS_AS(codec::parse_real("1.5x"), FormatError);
  CHECK_THROWS_AS(codec::parse_real("abc"), FormatError);
  CHECK_THROWS_AS(codec::parse_uint("-3"), FormatError);
  CHECK(codec::parse_uint("42") == 42);
}

TEST_CASE("space separated lists") {
  const std::vector<double> v{0.25, 1, -3.5};
  const std::string text = codec::format_reals(v);
  CHECK(text == "0.25 1 -3.5 ");
  CHECK(codec::parse_reals(text) == v);
  CHECK(codec::parse_reals("").empty());
  CHECK_THROWS_AS(codec::parse_reals("1 two 3"), FormatError);
}

TEST_CASE("little-endian byte reader and writer") {
  codec::ByteWriter w;
  w.u32(0x01020304);
  w.u64(7);
  w.f64(-2.5);
  const std::string bytes = w.take();
  REQUIRE(bytes.size() == 20);
  CHECK(bytes[0] == 0x04);
  CHECK(bytes[3] == 0x01);

  codec::ByteReader r(bytes);
  CHECK(r.u32() == 0x01020304);
  CHECK(r.u64() == 7);
  CHECK(r.f64() == -2.5);
  CHECK_THROWS_AS(r.u8(), TruncationError);
}
