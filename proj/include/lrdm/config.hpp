// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "lrdm/merge.hpp"
#include "lrdm/probe.hpp"
#include "lrdm/trainer.hpp"

namespace lrdm {

// Every knob of a pipeline run. The INI grammar is one `[section]` per group
// and `key = value` lines; lists are comma separated. Keys are addressed as
// section.key both in files and in overrides.
struct ExperimentConfig {
  // [world]
  std::size_t categories = 12;
  std::size_t colors = 8;
  int max_count = 4;
  std::size_t materials = 6;
  std::size_t settings = 8;
  std::size_t train_tuples = 5000;
  std::size_t val_queries = 500;
  std::size_t val_gallery = 1000;
  std::size_t test_queries = 1000;
  std::size_t test_gallery = 2000;
  int replicas_per_item = 1;
  int shortcut_count = 4;
  double noise_sigma = 0.1;

  // [model]
  std::size_t d_model = 64;
  std::size_t n_blocks = 4;
  std::size_t max_len = 24;
  std::size_t rank = 8;
  double lora_alpha = 16.0;

  // [pretrain]
  PretrainConfig pretrain;

  // [train]  (train.seed is derived from the master seed)
  TrainConfig train;
  std::vector<TrainMode> train_modes = {TrainMode::TransitionOnly, TrainMode::EndpointOnly, TrainMode::JointShared,
                                        TrainMode::JointPCGrad, TrainMode::Decoupled};

  // [probe]
  ProbeConfig probe;
  std::size_t probe_seeds = 5;

  // [merge]
  std::vector<MergeRule> merge_rules = {MergeRule::LRDM, MergeRule::TaskArithmetic, MergeRule::TIES, MergeRule::DARE,
                                        MergeRule::DareTies};
  MergeSpec merge;

  // [sweep]
  std::vector<double> alpha_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::vector<double> omega_grid;
  std::vector<double> lambda_grid;

  // [ablate]
  std::size_t ablate_seeds = 5;

  // [eval]
  std::size_t eval_max_queries = 0;  // 0 = all

  // [run]
  std::string output_dir = "runs/default";
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigInvalid

  WorldOptions world_options() const;
  EncoderConfig encoder_config() const;
  AdapterConfig adapter_config() const;

  // Seeds derived from the master seed through named sub-streams.
  std::uint64_t derived_seed(const std::string& label, std::uint64_t index = 0) const;
};

// Sets one dotted key (e.g. "train.steps") from its string form.
void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value);
// Splits "key=value".
std::pair<std::string, std::string> split_override(const std::string& text);

ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

// Sorted "key=value" lines over every key except run.output_dir.
std::string canonical_config(const ExperimentConfig& config);
// First 16 hex digits of SHA-256 over the canonical form.
std::string config_hash(const ExperimentConfig& config);
// INI text that reloads to the same configuration.
std::string config_to_ini(const ExperimentConfig& config);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace lrdm
