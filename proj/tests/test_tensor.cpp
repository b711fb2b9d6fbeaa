// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "lrdm/rng.hpp"
#include "lrdm/tensor.hpp"

using namespace lrdm;

TEST_CASE("l2_normalize") {
  const Vector a = l2_normalize(Vector{3, 4});
  CHECK(a[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(l2_normalize(Vector{1, 0, 0}) == Vector{1, 0, 0});
  CHECK_THROWS_AS(l2_normalize(Vector{0, 0}), Error);
  try {
    l2_normalize(Vector{0, 0});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateNorm);
  }
}

TEST_CASE("cosine_sim") {
  CHECK(cosine_sim(Vector{1, 0}, Vector{0, 1}) == 0.0);
  CHECK(cosine_sim(Vector{2, 0}, Vector{5, 0}) == doctest::Approx(1.0));
  CHECK(cosine_sim(Vector{1, 0}, Vector{-1, 0}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine_sim(Vector{1, 0}, Vector{1, 0, 0}), Error);
}

TEST_CASE("matmul") {
  Rng rng(3);
  Matrix m(3, 4);
  for (double& v : m.values()) v = rng.gaussian();
  CHECK(matmul(Matrix::identity(3), m) == m);
  const Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  const Matrix b = Matrix::from_rows({{0}, {1}});
  CHECK(matmul(a, b) == Matrix::from_rows({{2}, {4}}));
  CHECK(matmul(Matrix(2, 3), m) == Matrix(2, 4));
  CHECK_THROWS_AS(matmul(a, m), Error);
}

TEST_CASE("transposed products agree with explicit transposes") {
  Rng rng(4);
  Matrix a(5, 3), b(5, 4), c(2, 3);
  for (double& v : a.values()) v = rng.gaussian();
  for (double& v : b.values()) v = rng.gaussian();
  for (double& v : c.values()) v = rng.gaussian();
  const Matrix ta = matmul_transpose_a(a, b);
  const Matrix ea = matmul(a.transposed(), b);
  for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta.values()[i] == doctest::Approx(ea.values()[i]).epsilon(1e-13));
  const Matrix tb = matmul_transpose_b(a, c);
  const Matrix eb = matmul(a, c.transposed());
  for (std::size_t i = 0; i < tb.size(); ++i) CHECK(tb.values()[i] == doctest::Approx(eb.values()[i]).epsilon(1e-13));
}

TEST_CASE("matvec and outer products") {
  const Matrix m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  Vector out(2);
  matvec(m, Vector{1, 0, -1}, out);
  CHECK(out == Vector{-2, -2});
  Vector back(3);
  matvec_transposed(m, Vector{1, 1}, back);
  CHECK(back == Vector{5, 7, 9});
  Matrix g(2, 3);
  add_outer(g, 2.0, Vector{1, -1}, Vector{1, 2, 3});
  CHECK(g == Matrix::from_rows({{2, 4, 6}, {-2, -4, -6}}));
}

TEST_CASE("finite_diff_grad") {
  const auto sq = [](std::span<const double> p) { return p[0] * p[0]; };
  CHECK(finite_diff_grad(sq, Vector{3}, 1e-5)[0] == doctest::Approx(6.0).epsilon(1e-6));
  const auto constant = [](std::span<const double>) { return 4.2; };
  CHECK(finite_diff_grad(constant, Vector{1, 2, 3}, 1e-5) == Vector{0, 0, 0});
  const auto nsq = [](std::span<const double> p) { return p[0] * p[0] + p[1] * p[1]; };
  const Vector g = finite_diff_grad(nsq, Vector{1, 2}, 1e-5);
  CHECK(std::abs(g[0] - 2.0) < 1e-6);
  CHECK(std::abs(g[1] - 4.0) < 1e-6);
  const auto bad = [](std::span<const double>) { return NAN; };
  CHECK_THROWS_AS(finite_diff_grad(bad, Vector{1}, 1e-5), Error);
}

TEST_CASE("singular values") {
  // diag(3, 2) rotated: singular values are invariant.
  const double c = std::cos(0.3), s = std::sin(0.3);
  const Matrix r = Matrix::from_rows({{c, -s}, {s, c}});
  const Matrix d = Matrix::from_rows({{3, 0}, {0, 2}});
  const Vector sv = singular_values(matmul(r, d));
  CHECK(sv[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(sv[1] == doctest::Approx(2.0).epsilon(1e-12));
  // Rank-1 outer product.
  Matrix o(4, 3);
  add_outer(o, 1.0, Vector{1, 2, 3, 4}, Vector{1, -1, 2});
  const Vector so = singular_values(o);
  CHECK(so[0] == doctest::Approx(std::sqrt(30.0) * std::sqrt(6.0)).epsilon(1e-12));
  CHECK(std::abs(so[1]) < 1e-10);
}
