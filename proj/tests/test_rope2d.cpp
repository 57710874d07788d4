// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "unipatch/rope2d.hpp"

using namespace unipatch;

TEST_CASE("frequencies at small widths") {
  const Vec f4 = rope_frequencies(4);
  REQUIRE(f4.size() == 1);
  CHECK(f4[0] == Catch::Approx(0.01).epsilon(1e-15));

  const Vec f8 = rope_frequencies(8);
  REQUIRE(f8.size() == 2);
  CHECK(f8[0] == Catch::Approx(0.1).epsilon(1e-15));
  CHECK(f8[1] == Catch::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("frequencies decrease strictly at width 64") {
  const Vec f = rope_frequencies(64);
  REQUIRE(f.size() == 16);
  for (std::size_t i = 1; i < f.size(); ++i) CHECK(f[i] < f[i - 1]);
}

TEST_CASE("frequencies reject widths not divisible by four") {
  CHECK_THROWS_AS(rope_frequencies(6), ShapeError);
  CHECK_THROWS_AS(rope_frequencies(0), ShapeError);
}

TEST_CASE("origin position is the identity") {
  const RopeTable table = RopeTable::build(8);
  PositionedVector v{{0.3, -0.7, 1.1, 0.0, -2.0, 0.5, 0.9, -0.1}, 0, 0};
  CHECK(apply_rope2d(v, table) == v.values);
}

TEST_CASE("rotation preserves the norm") {
  const RopeTable table = RopeTable::build(8);
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    PositionedVector v;
    v.values.resize(8);
    for (double& x : v.values) x = rng.normal();
    v.m = rng.uniform_int(0, 100);
    v.n = rng.uniform_int(0, 100);
    const Vec out = apply_rope2d(v, table);
    double n0 = 0.0, n1 = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      n0 += v.values[i] * v.values[i];
      n1 += out[i] * out[i];
    }
    CHECK(std::abs(std::sqrt(n0) - std::sqrt(n1)) < 1e-12);
  }
}

TEST_CASE("d=4 rotation against direct trig evaluation") {
  const RopeTable table = RopeTable::build(4);
  const PositionedVector v{{1.0, 0.0, 1.0, 0.0}, 1, 2};
  const Vec out = apply_rope2d(v, table);
  CHECK(out[0] == Catch::Approx(std::cos(0.01)).epsilon(1e-15));
  CHECK(out[1] == Catch::Approx(std::sin(0.01)).epsilon(1e-15));
  CHECK(out[2] == Catch::Approx(std::cos(0.02)).epsilon(1e-15));
  CHECK(out[3] == Catch::Approx(std::sin(0.02)).epsilon(1e-15));
}

TEST_CASE("positions beyond the cache fall back to direct evaluation") {
  const RopeTable small = RopeTable::build(4, 8);
  const RopeTable big = RopeTable::build(4, 4096);
  PositionedVector v{{0.4, -1.2, 0.8, 0.3}, 2000, 3000};
  const Vec a = apply_rope2d(v, small);
  const Vec b = apply_rope2d(v, big);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a[i] == Catch::Approx(b[i]).margin(1e-12));
}

TEST_CASE("rope_dot of a vector with itself at one position is its squared norm") {
  const RopeTable table = RopeTable::build(8);
  PositionedVector q{{0.5, 1.5, -0.5, 2.0, 0.1, -1.0, 0.7, 0.2}, 3, 4};
  double norm2 = 0.0;
  for (double x : q.values) norm2 += x * x;
  CHECK(rope_dot(q, q, table) == Catch::Approx(norm2).epsilon(1e-13));
}

TEST_CASE("rope_dot is shift invariant") {
  const RopeTable table = RopeTable::build(8, 256);
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    PositionedVector q, k;
    q.values.resize(8);
    k.values.resize(8);
    for (double& x : q.values) x = rng.normal();
    for (double& x : k.values) x = rng.normal();
    q.m = rng.uniform_int(0, 30);
    q.n = rng.uniform_int(0, 30);
    k.m = rng.uniform_int(0, 30);
    k.n = rng.uniform_int(0, 30);
    const double base = rope_dot(q, k, table);
    const int s = rng.uniform_int(-15, 15), tt = rng.uniform_int(-15, 15);
    PositionedVector qs{q.values, q.m + s, q.n + tt};
    PositionedVector ks{k.values, k.m + s, k.n + tt};
    CHECK(std::abs(rope_dot(qs, ks, table) - base) < 1e-9);
  }
}

TEST_CASE("d=4 rope_dot against the hand-expanded relative form") {
  // R(a)q . R(b)k = q . R(b-a)k = cos(b-a)(q1 k1 + q2 k2) + sin(b-a)(q2 k1 - q1 k2).
  const RopeTable table = RopeTable::build(4);
  const double theta = 0.01;
  const PositionedVector q{{0.3, -0.8, 1.2, 0.4}, 5, 2};
  const PositionedVector k{{-0.6, 0.9, 0.1, -1.5}, 1, 7};
  auto pair_term = [&](double q1, double q2, double k1, double k2, int pq, int pk) {
    const double delta = (pk - pq) * theta;
    return std::cos(delta) * (q1 * k1 + q2 * k2) + std::sin(delta) * (q2 * k1 - q1 * k2);
  };
  const double want = pair_term(q.values[0], q.values[1], k.values[0], k.values[1], q.m, k.m) +
                      pair_term(q.values[2], q.values[3], k.values[2], k.values[3], q.n, k.n);
  CHECK(rope_dot(q, k, table) == Catch::Approx(want).margin(1e-13));
}

TEST_CASE("width mismatches are rejected") {
  const RopeTable table = RopeTable::build(8);
  PositionedVector v{{1.0, 2.0, 3.0, 4.0}, 0, 0};
  CHECK_THROWS_AS(apply_rope2d(v, table), ShapeError);
  PositionedVector q{{1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0}, 0, 0};
  CHECK_THROWS_AS(rope_dot(q, v, table), ShapeError);
}
