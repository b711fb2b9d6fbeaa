// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrdm/config.hpp"

namespace lrdm {

// Stage outputs, all inside the run directory:
//   gen       config.canonical, gen_manifest.json, tuples.jsonl, benchmark_val.json, benchmark_test.json
//   pretrain  pretrain.ckpt, pretrain_log.csv, pretrain.json
//   train     train_<mode>.ckpt, train_<mode>_log.csv
//   probe     probe.csv, probe.json
//   sweep     alpha_sweep.csv, sweep.json (+ omega_sweep.csv, lambda_sweep.csv for non-empty grids)
//   merge     merge_<rule>.ckpt
//   eval      eval.json, eval.csv
//   ablate    ablate.csv, ablate_summary.csv
//   report    report.json
// Every stage after gen reads its inputs back from disk and refuses inputs
// written under a different config hash.

struct LoadedWorld {
  AttributeSchema schema;
  std::vector<Item> train_items;
  std::vector<EditTuple> train_tuples;
  RetrievalBenchmark validation;
  RetrievalBenchmark test;
};

struct AblationRow {
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::EndpointOnly;
  double alpha = 0.0;  // merge coefficient used at test time (Decoupled only)
  MetricsReport test;
};

struct AblationSummaryRow {
  TrainMode mode = TrainMode::EndpointOnly;
  double r_at_1_mean = 0.0;
  double r_at_1_std = 0.0;
  double shortcut_gap_mean = 0.0;
  double map_at_10_mean = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<AblationSummaryRow> summary;  // one row per mode, table order
  std::vector<AdapterStack> joint_shared;   // one trained stack per seed
};

std::vector<AblationSummaryRow> summarize_ablation(const std::vector<AblationRow>& rows,
                                                   const std::vector<TrainMode>& modes);

class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig config);
  Pipeline(ExperimentConfig config, std::filesystem::path output_dir);

  const ExperimentConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }
  const std::string& hash() const { return hash_; }

  void gen();
  void pretrain();
  void train();
  void probe();
  void sweep();
  void merge();
  void eval();
  AblationResult ablate();
  nlohmann::json report() const;
  // gen, pretrain, train, probe, sweep, merge, eval, report.
  nlohmann::json run_all();

  LoadedWorld load_world() const;
  AdapterStack load_stack(const std::string& file) const;

  // Benchmark restricted to eval.max_queries (all when 0).
  static RetrievalBenchmark truncate(const RetrievalBenchmark& bench, std::size_t max_queries);

 private:
  std::filesystem::path path(const std::string& file) const { return dir_ / file; }
  std::filesystem::path require(const std::string& file) const;
  void check_hash(const std::string& file, const std::string& found) const;
  double alpha_star() const;

  ExperimentConfig config_;
  std::filesystem::path dir_;
  std::string hash_;
};

// Consolidated summary of a run directory: config hash, SHA-256 of every
// stage artifact and headline metrics. Throws MissingArtifact naming the
// first absent file and MixedConfig when artifacts disagree on the hash.
nlohmann::json build_report(const std::filesystem::path& dir);

// Artifacts a complete run must contain for this configuration.
std::vector<std::string> expected_artifacts(const ExperimentConfig& config);

// Config hash embedded in an artifact ("" when the format carries none).
std::string artifact_config_hash(const std::filesystem::path& file);

}  // namespace lrdm
