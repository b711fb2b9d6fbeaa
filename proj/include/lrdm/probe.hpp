// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrdm/trainer.hpp"

namespace lrdm {

enum class Objective { Endpoint, Transition };

// Per adapted text layer, the flattened coefficient gradient summed over
// `batches` mini-batches.
struct GradGroup {
  Objective objective = Objective::Endpoint;
  std::vector<Vector> layers;
  std::size_t batches = 0;
};

struct ProbeConfig {
  std::size_t batches = 16;  // M, split 8 + 8
  std::size_t batch_size = 64;
  double omega = kDefaultOmega;
  double feature_noise = 0.1;
  // Shared-coefficient probing (JointShared) reads coeff_end for both
  // objectives. With `decoupled` the transition side uses coeff_trans.
  bool decoupled = false;

  void validate() const;
};

// Per-batch layer gradients for one objective (no parameter update).
std::vector<std::vector<Vector>> per_batch_grads(const AdapterStack& stack, Objective objective,
                                                 const TrainingData& data, const std::vector<Batch>& batches,
                                                 const ProbeConfig& config);

GradGroup sum_group(Objective objective, const std::vector<std::vector<Vector>>& per_batch, std::size_t begin,
                    std::size_t end);

// Draws M batches from `seed` and sums the requested objective's gradients.
GradGroup collect_grads(const AdapterStack& stack, Objective objective, const TrainingData& data,
                        const ProbeConfig& config, std::uint64_t seed);

struct LayerScore {
  bool defined = false;
  double s_cross = 0.0;
  double s_base = 0.0;
  double gi = 0.0;
  // Same quantities after PCGrad projection of the aggregated pair.
  bool pcgrad_defined = false;
  double s_cross_pcgrad = 0.0;
  double gi_pcgrad = 0.0;
};

// s_cross = cos(g_end, g_trans); s_base = mean of the two objectives'
// split-half cosines; GI = s_base - s_cross. A layer with any zero aggregate
// is reported undefined.
std::vector<LayerScore> interference_scores(const GradGroup& g_end, const GradGroup& g_trans,
                                            const GradGroup& end_half_a, const GradGroup& end_half_b,
                                            const GradGroup& trans_half_a, const GradGroup& trans_half_b);

struct ProbeLayerSummary {
  std::size_t layer = 0;
  std::size_t defined_seeds = 0;
  double s_cross_mean = 0.0;
  double s_base_mean = 0.0;
  double gi_mean = 0.0;
  double gi_std = 0.0;  // sample std, n - 1
  double s_cross_pcgrad_mean = 0.0;
  double gi_pcgrad_mean = 0.0;
  double gi_pcgrad_std = 0.0;
};

struct GradProbeReport {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<LayerScore>> per_seed;  // [seed][layer]
  std::vector<ProbeLayerSummary> layers;
};

// One probe per (checkpoint, seed) pair; the same checkpoint may repeat.
GradProbeReport probe_report(const std::vector<const AdapterStack*>& checkpoints,
                             const std::vector<std::uint64_t>& seeds, const TrainingData& data,
                             const ProbeConfig& config);
GradProbeReport probe_report(const AdapterStack& checkpoint, const std::vector<std::uint64_t>& seeds,
                             const TrainingData& data, const ProbeConfig& config);

std::vector<ProbeLayerSummary> summarize(const std::vector<std::vector<LayerScore>>& per_seed);

void write_probe_csv(const GradProbeReport& report, const std::filesystem::path& path,
                     const std::string& config_hash = "");
nlohmann::json probe_to_json(const GradProbeReport& report);

}  // namespace lrdm
