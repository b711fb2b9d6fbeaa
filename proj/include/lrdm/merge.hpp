// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrdm/adapters.hpp"
#include "lrdm/retrieval.hpp"

namespace lrdm {

enum class MergeRule { LRDM, TaskArithmetic, TIES, DARE, DareTies };

std::string rule_name(MergeRule rule);  // "lrdm", "task_arithmetic", "ties", "dare", "dare_ties"
std::optional<MergeRule> rule_from_name(const std::string& name);

struct MergeSpec {
  MergeRule rule = MergeRule::LRDM;
  double alpha = 0.5;          // LRDM interpolation; baselines use weights (1 - alpha, alpha)
  double ties_density = 0.2;   // fraction kept per task vector
  double dare_drop_p = 0.9;
  std::uint64_t seed = 0;

  void validate() const;
};

// A_merge = (1 - alpha) A_end + alpha A_trans stored in coeff_end; coeff_trans
// is cleared. Evaluate through the End view.
AdapterStack lrdm_merge(const AdapterStack& stack, double alpha);

// Dense per-layer text deltas s * B * A_branch.
using TaskVector = std::vector<Matrix>;
TaskVector task_vector(const AdapterStack& stack, BranchId branch);

TaskVector task_arithmetic(const std::vector<TaskVector>& tvs, const std::vector<double>& weights);

// Flat TIES on equally sized vectors. Weights scale each vector's contribution
// to the sign election and the disjoint mean; equal weights give the plain
// disjoint mean.
Vector ties_merge(const std::vector<Vector>& vs, double density, const std::vector<double>& weights = {});
TaskVector ties_merge(const std::vector<TaskVector>& tvs, double density, const std::vector<double>& weights = {});

Vector dare(std::span<const double> v, double drop_p, Rng& rng);
Matrix dare(const Matrix& m, double drop_p, Rng& rng);
TaskVector dare_ties(const std::vector<TaskVector>& tvs, double drop_p, double density, std::uint64_t seed,
                     const std::vector<double>& weights = {});

// Deployable weights for any rule. Visual LoRA, mapping network and tau always
// come from the endpoint pathway.
TowerWeights fold_delta(const AdapterStack& stack, const TaskVector& delta);
TowerWeights merged_weights(const AdapterStack& stack, const MergeSpec& spec);

struct SweepRow {
  double alpha = 0.0;
  MetricsReport metrics;
};

// Evaluates lrdm_merge over the grid; the gallery index is built once since the
// visual pathway does not depend on alpha.
std::vector<SweepRow> alpha_sweep(const AdapterStack& stack, const std::vector<double>& grid,
                                  const RetrievalBenchmark& bench, std::size_t max_queries = 0);
// First grid point with the highest R@1 (ties resolved toward smaller alpha).
double best_alpha(const std::vector<SweepRow>& rows);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path,
                     const std::string& config_hash = "");

}  // namespace lrdm
