#include <doctest.h>

#include <cmath>

#include "hdt/random.hpp"

using namespace hdt;

// Known-answer vectors published with the Random123 library (kat_vectors).
TEST_CASE("philox4x32-10 known answers") {
  SUBCASE("zero counter and key") {
    const auto out = Philox4x32::apply({0, 0, 0, 0}, {0, 0});
    CHECK(out == Philox4x32::Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  }
  SUBCASE("all ones") {
    const auto out = Philox4x32::apply({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                       {0xffffffffu, 0xffffffffu});
    CHECK(out == Philox4x32::Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  }
  SUBCASE("pi digits") {
    const auto out = Philox4x32::apply({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                       {0xa4093822u, 0x299f31d0u});
    CHECK(out == Philox4x32::Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
  }
}

TEST_CASE("uniforms lie strictly inside the unit interval") {
  CHECK(to_unit_open(0) > 0.0);
  CHECK(to_unit_open(~0ull) < 1.0);
  const CounterStream s(7, 3);
  double sum = 0.0;
  for (std::uint64_t i = 0; i < 20000; ++i) {
    const double u = s.uniform(i);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("counter streams are pure functions of (seed, stream, index)") {
  const CounterStream a(42, 1), b(42, 1), c(42, 2), d(43, 1);
  CHECK(a.uniform(17) == b.uniform(17));
  CHECK(a.uniform(17) != c.uniform(17));
  CHECK(a.uniform(17) != d.uniform(17));
  CHECK(a.block(5)[1] == a.uniform(11));
}

TEST_CASE("box-muller produces unit normals") {
  const CounterStream s(1, 0);
  double m = 0.0, m2 = 0.0;
  const int n = 20000;
  for (int b = 0; b < n; ++b) {
    const auto u = s.block(static_cast<std::uint64_t>(b));
    const auto z = box_muller(u[0], u[1]);
    m += z[0] + z[1];
    m2 += z[0] * z[0] + z[1] * z[1];
  }
  m /= 2 * n;
  m2 /= 2 * n;
  CHECK(std::abs(m) < 0.03);
  CHECK(m2 == doctest::Approx(1.0).epsilon(0.03));
}
