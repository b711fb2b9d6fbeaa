// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "lrdm/objectives.hpp"

using namespace lrdm;

TEST_CASE("endpoint loss closed forms") {
  // Single pair: one candidate, zero loss for any temperature.
  const std::vector<Vector> q1 = {{0.6, 0.8}};
  CHECK(endpoint_loss(q1, q1, 0.0).loss == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(endpoint_loss(q1, q1, 3.0).loss == doctest::Approx(0.0).epsilon(1e-15));

  // Orthonormal matched pairs at tau = 1: -log(e / (e + 1)) = log(1 + e^-1).
  const std::vector<Vector> q = {{1, 0}, {0, 1}};
  const double expect = 0.31326168751822286;  // log(1 + exp(-1))
  CHECK(std::abs(endpoint_loss(q, q, 0.0).loss - expect) < 1e-14);
}

TEST_CASE("endpoint loss is permutation invariant and its gradients are right") {
  Rng rng(2);
  std::vector<Vector> q(5, Vector(6)), t(5, Vector(6));
  for (auto* set : {&q, &t})
    for (auto& v : *set) {
      for (double& x : v) x = rng.gaussian();
      v = l2_normalize(v);
    }
  const double log_tau = 1.3;
  const EndpointLoss base = endpoint_loss(q, t, log_tau);
  std::vector<Vector> qp = {q[3], q[0], q[4], q[1], q[2]}, tp = {t[3], t[0], t[4], t[1], t[2]};
  CHECK(endpoint_loss(qp, tp, log_tau).loss == doctest::Approx(base.loss).epsilon(1e-14));

  const double h = 1e-6;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 6; ++k) {
      auto up = q, down = q;
      up[i][k] += h;
      down[i][k] -= h;
      const double fd = (endpoint_loss(up, t, log_tau).loss - endpoint_loss(down, t, log_tau).loss) / (2 * h);
      CHECK(base.grad_queries[i][k] == doctest::Approx(fd).epsilon(1e-7));
      auto tu = t, td = t;
      tu[i][k] += h;
      td[i][k] -= h;
      const double ft = (endpoint_loss(q, tu, log_tau).loss - endpoint_loss(q, td, log_tau).loss) / (2 * h);
      CHECK(base.grad_targets[i][k] == doctest::Approx(ft).epsilon(1e-7));
    }
  const double ftau = (endpoint_loss(q, t, log_tau + h).loss - endpoint_loss(q, t, log_tau - h).loss) / (2 * h);
  CHECK(base.grad_log_tau == doctest::Approx(ftau).epsilon(1e-7));
  CHECK(base.grad_log_tau != 0.0);
}

TEST_CASE("source anchor") {
  auto setup = lrdm::testing::small_setup();
  lrdm::testing::randomize_coefficients(setup.stack, 1);
  const auto w = setup.stack.view(BranchId::End);
  const PreparedTuple& p = setup.data.tuples[0];
  Rng r0(0);
  const Vector ref = visual_feature(setup.data.schema, p.reference, 0.0, r0);
  const Vector caption = encode_text(w, p.source_caption);
  const Vector pseudo = map_visual(w, ref);
  const Vector image = encode_text(w, setup.data.source_prompt, &pseudo);
  CHECK(source_anchor(w, p.source_caption, setup.data.source_prompt, ref, 0.0) == caption);
  const Vector one = source_anchor(w, p.source_caption, setup.data.source_prompt, ref, 1.0);
  for (std::size_t k = 0; k < one.size(); ++k) CHECK(one[k] == doctest::Approx(image[k]).epsilon(1e-15));
  const Vector mix = source_anchor(w, p.source_caption, setup.data.source_prompt, ref, 0.25);
  CHECK(norm(mix) <= 1.0 + 1e-12);
  for (std::size_t k = 0; k < mix.size(); ++k)
    CHECK(mix[k] == doctest::Approx(0.75 * caption[k] + 0.25 * image[k]).epsilon(1e-14));
  CHECK_THROWS_AS(source_anchor(w, p.source_caption, setup.data.source_prompt, ref, 1.5), Error);
}

TEST_CASE("transition delta") {
  auto setup = lrdm::testing::small_setup();
  const auto w = setup.stack.view(BranchId::End);
  const PreparedTuple& p = setup.data.tuples[0];
  const Vector ref(setup.data.schema.feature_dim(), 0.1);
  const Vector anchor0 = source_anchor(w, p.source_caption, setup.data.source_prompt, ref, 0.0);
  try {
    transition_delta(w, p.source_caption, anchor0);
    FAIL("expected DegenerateDelta");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateDelta);
  }
  for (const auto& t : setup.data.tuples) {
    const Vector anchor = source_anchor(w, t.source_caption, setup.data.source_prompt, ref, 0.25);
    CHECK(norm(transition_delta(w, t.target, anchor)) <= 2.0);
  }
}

TEST_CASE("transition loss closed forms") {
  const Vector delta = {0.3, -0.4, 1.2};
  const Vector par = {0.6, -0.8, 2.4};
  const TransitionLoss a = transition_loss(par, delta, delta);
  CHECK(a.l_fwd == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(a.l_rev == doctest::Approx(2.0).epsilon(1e-15));
  // Swapping the instruction embeddings swaps the terms.
  const Vector f = {0.1, 0.2, 0.3}, r = {-0.5, 0.1, 0.0};
  const TransitionLoss x = transition_loss(f, r, delta);
  Vector nf = f, nr = r;
  for (double& v : nf) v = -v;
  for (double& v : nr) v = -v;
  const TransitionLoss y = transition_loss(nr, nf, delta);
  CHECK(x.l_fwd == doctest::Approx(y.l_rev).epsilon(1e-14));
  CHECK(x.l_rev == doctest::Approx(y.l_fwd).epsilon(1e-14));
  CHECK_THROWS_AS(transition_loss(f, r, Vector{0, 0, 0}), Error);
}

TEST_CASE("joint loss") {
  CHECK(joint_loss(1.5, 0.7, 0.0) == 1.5);
  CHECK(joint_loss(1.5, 0.7, 1.0) == doctest::Approx(2.2));
  CHECK(joint_loss(1.5, 0.7, 3.0) - joint_loss(1.5, 0.7, 2.0) == doctest::Approx(0.7));
  CHECK_THROWS_AS(joint_loss(1.0, 1.0, -1.0), Error);
}

TEST_CASE("pcgrad") {
  const Vector g = {1.0, -2.0, 0.5};
  Vector neg = g;
  for (double& v : neg) v = -v;
  for (double v : pcgrad_combine(g, neg)) CHECK(v == doctest::Approx(0.0).epsilon(1e-15));
  const Vector o = {2.0, 1.0, 0.0};
  CHECK(pcgrad_combine(g, o) == Vector{3.0, -1.0, 0.5});
  CHECK(pcgrad_combine(g, g) == Vector{2.0, -4.0, 1.0});
  // After projection each gradient is orthogonal to the other original.
  const Vector e = {1.0, 0.0}, t = {-1.0, 1.0};
  const auto [pe, pt] = pcgrad_project(e, t);
  CHECK(dot(pe, t) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(dot(pt, e) == doctest::Approx(0.0).epsilon(1e-15));
}
