// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "lrdm/merge.hpp"

using namespace lrdm;
using namespace lrdm::testing;

TEST_CASE("rule names") {
  for (MergeRule r : {MergeRule::LRDM, MergeRule::TaskArithmetic, MergeRule::TIES, MergeRule::DARE, MergeRule::DareTies})
    CHECK(rule_from_name(rule_name(r)) == r);
  CHECK_FALSE(rule_from_name("average").has_value());
}

TEST_CASE("lrdm coefficient interpolation") {
  AdapterStack s = random_stack(small_schema(), 1);
  s.text[0].coeff_end = Matrix::from_rows({{2, 0}, {0, 2}});
  s.text[0].coeff_trans = Matrix::from_rows({{0, 4}, {4, 0}});
  s.text[0].basis = Matrix(10, 2, 0.1);
  const AdapterStack half = lrdm_merge(s, 0.5);
  CHECK(half.text[0].coeff_end == Matrix::from_rows({{1, 2}, {2, 1}}));
  CHECK(frobenius(half.text[0].coeff_trans) == 0.0);

  const AdapterStack r = random_stack(small_schema(), 2);
  const AdapterStack m0 = lrdm_merge(r, 0.0), m1 = lrdm_merge(r, 1.0);
  for (std::size_t l = 0; l < r.text.size(); ++l) {
    CHECK(m0.text[l].coeff_end == r.text[l].coeff_end);
    CHECK(m1.text[l].coeff_end == r.text[l].coeff_trans);
    CHECK(m0.text[l].basis == r.text[l].basis);
  }
  CHECK_THROWS_AS(lrdm_merge(r, 1.5), Error);
}

TEST_CASE("task arithmetic") {
  const AdapterStack r = random_stack(small_schema(), 3);
  const TaskVector te = task_vector(r, BranchId::End), tt = task_vector(r, BranchId::Trans);
  const TaskVector one = task_arithmetic({te}, {1.0});
  for (std::size_t l = 0; l < te.size(); ++l) CHECK(one[l] == te[l]);
  const TaskVector mix = task_arithmetic({te, tt}, {0.5, 0.5});
  const TaskVector lr = task_vector(lrdm_merge(r, 0.5), BranchId::End);
  for (std::size_t l = 0; l < te.size(); ++l)
    for (std::size_t k = 0; k < mix[l].size(); ++k) CHECK(std::abs(mix[l].values()[k] - lr[l].values()[k]) < 1e-12);

  TaskVector zeros;
  for (const auto& m : te) zeros.emplace_back(m.rows(), m.cols());
  const TowerWeights base = fold_delta(r, task_arithmetic({zeros, zeros}, {0.5, 0.5}));
  for (std::size_t l = 0; l < r.text.size(); ++l) CHECK(base.text[l] == r.text[l].base);
}

TEST_CASE("ties hand trace") {
  const Vector out = ties_merge(std::vector<Vector>{{2, -3, 0.1}, {1.5, 1, -0.2}}, 2.0 / 3.0);
  CHECK(out == Vector{1.75, -3, 0});
  const Vector v = {0.4, -1.0, 2.5, 0.0};
  CHECK(ties_merge(std::vector<Vector>{v, v}, 1.0) == v);
  // An all-zero partner leaves the other vector's trimmed form.
  const Vector trimmed = ties_merge(std::vector<Vector>{v, Vector(4, 0.0)}, 0.5);
  CHECK(trimmed == Vector{0, -1.0, 2.5, 0});
  CHECK_THROWS_AS(ties_merge(std::vector<Vector>{v}, 0.0), Error);
}

TEST_CASE("dare") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng peek(seed), rng(seed);
    const bool dropped = peek.uniform() < 0.5;
    const Vector out = dare(Vector{4.0}, 0.5, rng);
    CHECK(out[0] == (dropped ? 0.0 : 8.0));
  }
  Rng rng(1);
  const Vector v = {1.0, -2.0, 3.0};
  CHECK(dare(v, 0.0, rng) == v);
  CHECK_THROWS_AS(dare(v, 1.0, rng), Error);
}

TEST_CASE("dare ties") {
  const AdapterStack r = random_stack(small_schema(), 4);
  const std::vector<TaskVector> tvs = {task_vector(r, BranchId::End), task_vector(r, BranchId::Trans)};
  const TaskVector plain = ties_merge(tvs, 0.3);
  const TaskVector nodrop = dare_ties(tvs, 0.0, 0.3, 9);
  for (std::size_t l = 0; l < plain.size(); ++l) CHECK(plain[l] == nodrop[l]);
  const TaskVector a = dare_ties(tvs, 0.5, 0.3, 9), b = dare_ties(tvs, 0.5, 0.3, 9), c = dare_ties(tvs, 0.5, 0.3, 10);
  for (std::size_t l = 0; l < a.size(); ++l) CHECK(a[l] == b[l]);
  CHECK(a[0] != c[0]);
  const TaskVector same = dare_ties({tvs[0], tvs[0]}, 0.0, 1.0, 1);
  for (std::size_t l = 0; l < same.size(); ++l)
    for (std::size_t k = 0; k < same[l].size(); ++k)
      CHECK(same[l].values()[k] == doctest::Approx(tvs[0][l].values()[k]).epsilon(1e-15));
}

TEST_CASE("merged weights per rule") {
  const AdapterStack r = random_stack(small_schema(), 5);
  MergeSpec spec;
  spec.alpha = 0.0;
  spec.rule = MergeRule::LRDM;
  const TowerWeights end = r.view(BranchId::End);
  CHECK(merged_weights(r, spec).text == end.text);
  spec.rule = MergeRule::TaskArithmetic;
  const TowerWeights ta = merged_weights(r, spec);
  for (std::size_t l = 0; l < end.text.size(); ++l)
    for (std::size_t k = 0; k < end.text[l].size(); ++k)
      CHECK(std::abs(ta.text[l].values()[k] - end.text[l].values()[k]) < 1e-12);
  for (MergeRule rule : {MergeRule::TIES, MergeRule::DARE, MergeRule::DareTies}) {
    spec.rule = rule;
    spec.alpha = 0.5;
    const TowerWeights w = merged_weights(r, spec);
    CHECK(w.text.size() == end.text.size());
    CHECK(w.visual == end.visual);
    for (const auto& m : w.text) CHECK(all_finite(m.values()));
  }
  spec.dare_drop_p = 1.0;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("alpha sweep") {
  auto s = small_setup();
  randomize_coefficients(s.stack, 6, 0.2);
  const auto rows = alpha_sweep(s.stack, {0.0}, s.world.validation);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].metrics == evaluate(s.world.validation, s.stack.view(BranchId::End)));
  CHECK(alpha_sweep(s.stack, {0.0, 1.0}, s.world.validation).size() == 2);

  std::vector<SweepRow> fake(3);
  fake[0].alpha = 0.0;
  fake[1].alpha = 0.4;
  fake[2].alpha = 0.8;
  fake[0].metrics.r_at_1 = 0.2;
  fake[1].metrics.r_at_1 = 0.5;
  fake[2].metrics.r_at_1 = 0.5;
  CHECK(best_alpha(fake) == 0.4);
  CHECK_THROWS_AS(best_alpha({}), Error);
}
