// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "lrdm/probe.hpp"

using namespace lrdm;
using namespace lrdm::testing;

namespace {

GradGroup group(Objective o, std::vector<Vector> layers, std::size_t batches = 1) {
  GradGroup g;
  g.objective = o;
  g.layers = std::move(layers);
  g.batches = batches;
  return g;
}

}  // namespace

TEST_CASE("interference fixtures") {
  const Vector v = {0.3, -1.0, 2.0};
  const GradGroup e = group(Objective::Endpoint, {v});
  const GradGroup t = group(Objective::Transition, {v});
  const auto same = interference_scores(e, t, e, e, t, t);
  CHECK(same[0].defined);
  CHECK(std::abs(same[0].s_cross - 1.0) < 1e-12);
  CHECK(std::abs(same[0].s_base - 1.0) < 1e-12);
  CHECK(std::abs(same[0].gi) < 1e-9);

  Vector neg = v;
  for (double& x : neg) x = -x;
  const GradGroup tn = group(Objective::Transition, {neg});
  const auto opp = interference_scores(e, tn, e, e, tn, tn);
  CHECK(std::abs(opp[0].s_cross + 1.0) < 1e-12);
  CHECK(std::abs(opp[0].s_base - 1.0) < 1e-12);
  CHECK(std::abs(opp[0].gi - 2.0) < 1e-9);
}

TEST_CASE("quadratic two-objective fixture") {
  // f1 = (x - 1)^2 and f2 = (x + 1)^2 over parameters (x, y) at the origin.
  // Gradients are deterministic, so each half equals its aggregate direction.
  const Vector g1 = {2.0 * (0.0 - 1.0), 0.0};
  const Vector g2 = {2.0 * (0.0 + 1.0), 0.0};
  std::vector<std::vector<Vector>> per1(8, {g1}), per2(8, {g2});
  const auto s = interference_scores(sum_group(Objective::Endpoint, per1, 0, 8), sum_group(Objective::Transition, per2, 0, 8),
                                     sum_group(Objective::Endpoint, per1, 0, 4), sum_group(Objective::Endpoint, per1, 4, 8),
                                     sum_group(Objective::Transition, per2, 0, 4),
                                     sum_group(Objective::Transition, per2, 4, 8));
  CHECK(std::abs(s[0].gi - 2.0) < 1e-9);
}

TEST_CASE("zero-gradient layers are excluded") {
  const GradGroup e = group(Objective::Endpoint, {{1.0, 0.0}, {0.0, 0.0}});
  const GradGroup t = group(Objective::Transition, {{0.5, 0.5}, {1.0, 0.0}});
  const auto s = interference_scores(e, t, e, e, t, t);
  CHECK(s[0].defined);
  CHECK_FALSE(s[1].defined);
  const auto summary = summarize({s, s});
  CHECK(summary[0].defined_seeds == 2);
  CHECK(summary[1].defined_seeds == 0);
  CHECK(std::isnan(summary[1].gi_mean));
}

TEST_CASE("summary statistics use n - 1") {
  std::vector<std::vector<LayerScore>> per(5, std::vector<LayerScore>(1));
  const double gis[] = {0.1, 0.4, 0.2, 0.9, 0.4};
  for (int i = 0; i < 5; ++i) {
    per[i][0].defined = true;
    per[i][0].gi = gis[i];
  }
  const auto s = summarize(per);
  CHECK(s[0].gi_mean == doctest::Approx(0.4));
  // Sum of squared deviations 0.38 over 4.
  CHECK(s[0].gi_std == doctest::Approx(std::sqrt(0.38 / 4.0)).epsilon(1e-12));
}

TEST_CASE("gradient collection") {
  auto s = small_setup();
  randomize_coefficients(s.stack, 2, 0.1);
  ProbeConfig pc;
  pc.batches = 4;
  pc.batch_size = 8;
  const AdapterStack before = s.stack;
  const GradGroup a = collect_grads(s.stack, Objective::Endpoint, s.data, pc, 3);
  const GradGroup b = collect_grads(s.stack, Objective::Endpoint, s.data, pc, 3);
  CHECK(a.layers == b.layers);
  CHECK(a.batches == 4);
  CHECK(s.stack.text[0].coeff_end == before.text[0].coeff_end);

  // A repeated fixed batch: doubling M doubles the aggregate.
  const Batch fixed = make_batch(s.data, 8, 0.1, 1, 0);
  const auto per2 = per_batch_grads(s.stack, Objective::Transition, s.data, {fixed, fixed}, pc);
  const auto per4 = per_batch_grads(s.stack, Objective::Transition, s.data, {fixed, fixed, fixed, fixed}, pc);
  const GradGroup g2 = sum_group(Objective::Transition, per2, 0, 2);
  const GradGroup g4 = sum_group(Objective::Transition, per4, 0, 4);
  for (std::size_t l = 0; l < g2.layers.size(); ++l)
    for (std::size_t k = 0; k < g2.layers[l].size(); ++k)
      CHECK(g4.layers[l][k] == doctest::Approx(2.0 * g2.layers[l][k]).epsilon(1e-12));

  ProbeConfig odd = pc;
  odd.batches = 3;
  CHECK_THROWS_AS(odd.validate(), Error);
}

TEST_CASE("probe report") {
  auto s = small_setup();
  randomize_coefficients(s.stack, 7, 0.1);
  ProbeConfig pc;
  pc.batches = 4;
  pc.batch_size = 8;
  const GradProbeReport r = probe_report(s.stack, {1, 2, 3}, s.data, pc);
  CHECK(r.per_seed.size() == 3);
  CHECK(r.layers.size() == s.stack.text.size());
  const GradProbeReport again = probe_report(s.stack, {1, 2, 3}, s.data, pc);
  CHECK(probe_to_json(r) == probe_to_json(again));
  for (const auto& layer : r.layers) {
    CHECK(layer.defined_seeds == 3);
    CHECK(std::isfinite(layer.gi_mean));
  }
  const auto dir = temp_dir("probe");
  write_probe_csv(r, dir / "probe.csv", "0000000000000001");
  std::ifstream in(dir / "probe.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "# config_hash=0000000000000001");
  std::getline(in, line);
  CHECK(line ==
        "layer,s_cross_mean,s_base_mean,gi_mean,gi_std,defined_seeds,s_cross_pcgrad_mean,gi_pcgrad_mean,gi_pcgrad_std");
}
