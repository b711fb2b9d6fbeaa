// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "lrdm/merge.hpp"
#include "lrdm/retrieval.hpp"

using namespace lrdm;
using namespace lrdm::testing;

TEST_CASE("gallery index") {
  auto s = small_setup();
  randomize_coefficients(s.stack, 1, 0.2);
  const TowerWeights w = s.stack.view(BranchId::End);
  const GalleryIndex a = build_gallery_index(s.world.test, w);
  const GalleryIndex b = build_gallery_index(s.world.test, w);
  CHECK(a.embeddings == b.embeddings);
  CHECK(a.ids.size() == s.world.test.gallery.size());
  for (std::size_t i = 0; i < a.ids.size(); ++i) CHECK(std::abs(norm(a.embeddings.row(i)) - 1.0) < 1e-12);
}

TEST_CASE("query composition") {
  auto s = small_setup();
  randomize_coefficients(s.stack, 2, 0.2);
  const Vocab vocab(s.world.schema);
  const BenchmarkQuery& q = s.world.test.queries[0];
  const TowerWeights w = s.stack.view(BranchId::End);
  const Vector a = compose_query(q.tuple, q.ref_feature, w, vocab);
  CHECK(a == compose_query(q.tuple, q.ref_feature, w, vocab));
  CHECK(std::abs(norm(a) - 1.0) < 1e-12);
  CHECK(compose_query(q.tuple, q.ref_feature, lrdm_merge(s.stack, 0.0).view(BranchId::End), vocab) == a);
}

TEST_CASE("rank") {
  GalleryIndex idx;
  idx.ids = {10, 11, 12, 13};
  idx.embeddings = Matrix::from_rows({{1, 0}, {0, 1}, {0.6, 0.8}, {-1, 0}});
  CHECK(rank(Vector{0.6, 0.8}, idx).front() == 12);
  CHECK(rank(Vector{3.0, 4.0}, idx) == rank(Vector{0.6, 0.8}, idx));
  auto fwd = rank(Vector{0.9, 0.1}, idx);
  auto back = rank(Vector{-0.9, -0.1}, idx);
  std::reverse(back.begin(), back.end());
  CHECK(fwd == back);
  // Equal scores break ties by ascending id.
  GalleryIndex tie;
  tie.ids = {5, 2, 9};
  tie.embeddings = Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}});
  CHECK(rank(Vector{1, 0}, tie) == std::vector<int>{2, 5, 9});
}

TEST_CASE("recall") {
  const std::vector<Ranking> r = {{1, 2, 3, 4, 5, 6}, {7, 8, 9, 10, 11, 12}};
  CHECK(recall_at_k(r, {{1}, {7}}, 1) == 1.0);
  CHECK(recall_at_k(r, {{6}, {12}}, 6) == 1.0);
  CHECK(recall_at_k(r, {{6}, {12}}, 100) == 1.0);
  const std::vector<Ranking> one = {{4, 9, 3, 1, 2}};
  CHECK(recall_at_k(one, {{3}}, 1) == 0.0);
  CHECK(recall_at_k(one, {{3}}, 5) == 1.0);
  CHECK_THROWS_AS(recall_at_k(one, {{3}}, 0), Error);
}

TEST_CASE("subset recall") {
  const std::vector<Ranking> r = {{4, 9, 3, 1, 2, 8, 7}};
  CHECK(subset_recall(r, {{3}}, {{3}}, 1) == 1.0);
  CHECK(subset_recall(r, {{3, 9, 1}}, {{3}}, 1) == 0.0);
  CHECK(subset_recall(r, {{3, 9, 1}}, {{3}}, 2) == 1.0);
  try {
    subset_recall(r, {{9, 1}}, {{3}}, 1);
    FAIL("expected CandidateSetInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CandidateSetInvalid);
  }
  try {
    subset_recall(r, {{3, 99}}, {{3}}, 1);
    FAIL("expected CandidateSetInvalid");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CandidateSetInvalid);
  }

  // Random rankings over six candidates: R_s@3 has expectation 1/2.
  Rng rng(3);
  std::vector<Ranking> rs;
  std::vector<std::vector<int>> cand, rel;
  for (int q = 0; q < 20000; ++q) {
    Ranking p = {0, 1, 2, 3, 4, 5};
    for (std::size_t i = p.size() - 1; i > 0; --i) std::swap(p[i], p[rng.uniform_int(i + 1)]);
    rs.push_back(p);
    cand.push_back({0, 1, 2, 3, 4, 5});
    rel.push_back({0});
  }
  CHECK(std::abs(subset_recall(rs, cand, rel, 3) - 0.5) < 0.01);
}

TEST_CASE("average precision") {
  CHECK(average_precision_at_k({5, 9, 6, 1, 2}, {5, 6}, 5) == doctest::Approx(0.5 * (1.0 + 2.0 / 3.0)).epsilon(1e-15));
  CHECK(average_precision_at_k({3, 1, 2, 4}, {1, 2, 3}, 10) == 1.0);
  CHECK(average_precision_at_k({4, 5, 6, 1}, {1}, 3) == 0.0);
  // Denominator is min(|rel|, k).
  CHECK(average_precision_at_k({1, 2, 9}, {1, 2, 3, 4}, 2) == 1.0);
}

TEST_CASE("shortcut gap") {
  const std::vector<Ranking> r = {{1, 2, 3}, {2, 1, 3}, {3, 2, 1}};
  CHECK(shortcut_gap(r, {{1}, {2}, {3}}, {{2}, {1}, {1}}) == 0.0);
  CHECK(shortcut_gap(r, {{3}, {3}, {1}}, {{1}, {2}, {3}}) == 1.0);
  CHECK(shortcut_gap(r, {{2}, {1}, {1}}, {{1}, {3}, {}}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("metrics on a benchmark") {
  auto s = small_setup();
  randomize_coefficients(s.stack, 5, 0.2);
  const MetricsReport m = evaluate(s.world.test, s.stack.view(BranchId::End));
  CHECK(m.queries == s.world.test.queries.size());
  CHECK(m.r_at_1 <= m.r_at_5);
  CHECK(m.r_at_5 <= m.r_at_10);
  CHECK(m.rs_at_1 >= m.r_at_1);
  CHECK(m.rs_at_1 <= m.rs_at_2);
  CHECK(m.rs_at_2 <= m.rs_at_3);
  CHECK((m.shortcut_gap >= 0.0 && m.shortcut_gap <= 1.0));
  CHECK(evaluate(s.world.test, s.stack.view(BranchId::End), 5).queries == 5);
  const auto dir = temp_dir("metrics");
  write_metrics_json(m, dir / "m.json", "00000000000000aa");
  write_metrics_csv(m, dir / "m.csv", "00000000000000aa");
  CHECK(std::filesystem::exists(dir / "m.json"));
  CHECK(std::filesystem::exists(dir / "m.csv"));
}
