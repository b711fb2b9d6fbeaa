// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <set>

#include "lrdm/rng.hpp"

using namespace lrdm;

// Known-answer vectors for Philox4x32-10 published with the Random123 suite.
TEST_CASE("philox4x32-10 known answers") {
  using C = std::array<std::uint32_t, 4>;
  using K = std::array<std::uint32_t, 2>;
  CHECK(philox4x32_10(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(philox4x32_10(C{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, K{0xffffffffu, 0xffffffffu}) ==
        C{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(philox4x32_10(C{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, K{0xa4093822u, 0x299f31d0u}) ==
        C{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are reproducible and independent") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    (void)c;
  }
  Rng d(42), e(43);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += d.next_u64() == e.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("split does not advance the parent and labels differ") {
  Rng root(7);
  Rng before = root;
  Rng x = root.split("world");
  Rng y = root.split("train");
  Rng x2 = root.split("world");
  CHECK(root.next_u64() == before.next_u64());
  const auto vx = x.next_u64();
  CHECK(vx == x2.next_u64());
  CHECK(vx != y.next_u64());
  CHECK(root.split(std::uint64_t{0}).next_u64() != root.split(std::uint64_t{1}).next_u64());
}

TEST_CASE("uniform and uniform_int ranges") {
  Rng rng(1);
  double sum = 0.0;
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    sum += u;
    const auto k = rng.uniform_int(7);
    CHECK(k < 7u);
    seen.insert(k);
  }
  CHECK(seen.size() == 7);
  CHECK(sum / 20000.0 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("gaussian moments") {
  Rng rng(5);
  const int n = 50000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    s += g;
    s2 += g * g;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}
