// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lrdm/adapters.hpp"
#include "lrdm/objectives.hpp"
#include "lrdm/synthworld.hpp"

namespace lrdm {

enum class TrainMode { Decoupled, JointShared, JointPCGrad, EndpointOnly, TransitionOnly };
inline constexpr TrainMode kAllModes[] = {TrainMode::TransitionOnly, TrainMode::EndpointOnly, TrainMode::JointShared,
                                          TrainMode::JointPCGrad, TrainMode::Decoupled};

std::string mode_name(TrainMode mode);     // config identifier, e.g. "joint_pcgrad"
std::string mode_label(TrainMode mode);    // table row label, e.g. "Joint+PCGrad"
std::optional<TrainMode> mode_from_name(const std::string& name);

// Branch used at inference for single-branch modes. Decoupled goes through
// the coefficient merge instead.
BranchId inference_branch(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::Decoupled;
  std::size_t steps = 1000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 50;
  double lambda_trans = 1.0;  // joint modes only
  double omega = kDefaultOmega;
  double feature_noise = 0.1;
  std::uint64_t seed = 0;
  // Decoupled only: compute transition anchors with the weights from before
  // this step's endpoint update instead of after it.
  bool transition_uses_pre_step_weights = false;

  void validate() const;  // throws ConfigInvalid
};

// Learning rate at a 0-based step: linear warmup, then cosine decay to zero.
double learning_rate_at(const TrainConfig& config, std::size_t step);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamSlot {
  Matrix m;
  Matrix v;
  std::uint64_t t = 0;
};

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, AdamSlot> slots;
};

void adamw_update(Matrix& param, const Matrix& grad, AdamSlot& slot, double lr, double weight_decay,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Gradients keyed by checkpoint tensor name.
using ParamGrads = std::map<std::string, Matrix>;

// Applies AdamW to every tensor in `grads`. log_tau is never decayed.
void apply_updates(AdapterStack& stack, const ParamGrads& grads, OptimizerState& opt, double lr, double weight_decay);

// ---------------------------------------------------------------------------
// Prepared training data

struct PreparedTuple {
  Item reference;
  std::vector<int> query;           // "a photo of * and <t_fwd>"
  std::vector<int> target;          // c_tgt
  std::vector<int> source_caption;  // c_src
  std::vector<int> forward;         // t_fwd
  std::vector<int> reverse;         // t_rev
};

struct TrainingData {
  AttributeSchema schema;
  std::vector<PreparedTuple> tuples;
  std::vector<int> source_prompt;  // "a photo of *"
};

// Pairs each tuple with its reference item (matched by ref_item_id).
TrainingData prepare_training_data(const AttributeSchema& schema, const std::vector<Item>& items,
                                   const std::vector<EditTuple>& tuples);

struct Batch {
  std::vector<std::size_t> indices;
  std::vector<Vector> features;  // noisy reference features, one per index
};

// Batch for a given step; a pure function of (data size, seed, step).
Batch make_batch(const TrainingData& data, std::size_t batch_size, double noise, std::uint64_t seed, std::size_t step);

// ---------------------------------------------------------------------------
// Gradients (pure; the stack is not modified)

struct EndpointGradients {
  double loss = 0.0;
  ParamGrads grads;  // text.*.basis, text.*.coeff_<branch>, visual.basis, visual.coeff, mapping.*, log_tau
};

EndpointGradients endpoint_gradients(const AdapterStack& stack, BranchId branch, const TrainingData& data,
                                     const Batch& batch);

struct TransitionGradients {
  double l_fwd = 0.0;  // means over valid tuples
  double l_rev = 0.0;
  std::size_t valid = 0;
  std::size_t degenerate = 0;
  ParamGrads grads;  // text.*.coeff_<branch> (+ text.*.basis when requested)
};

// Anchors are computed on `anchor_stack` (defaults to `stack`) and detached.
TransitionGradients transition_gradients(const AdapterStack& stack, BranchId branch, const TrainingData& data,
                                         const Batch& batch, double omega, bool include_basis,
                                         const AdapterStack* anchor_stack = nullptr);

// ---------------------------------------------------------------------------
// Training

struct StepLog {
  std::size_t step = 0;
  double l_end = 0.0;
  double l_fwd = 0.0;
  double l_rev = 0.0;
  double lr = 0.0;
  double tau = 0.0;
  std::size_t degenerate_count = 0;
};

LossBreakdown train_step_endpoint(AdapterStack& stack, const TrainingData& data, const Batch& batch,
                                  OptimizerState& opt, double lr, double weight_decay);
LossBreakdown train_step_transition(AdapterStack& stack, const TrainingData& data, const Batch& batch,
                                    OptimizerState& opt, double lr, double weight_decay, double omega,
                                    const AdapterStack* anchor_stack = nullptr);

struct TrainResult {
  AdapterStack stack;
  std::vector<StepLog> log;
};

TrainResult run_training(const TrainConfig& config, const TrainingData& data, const AdapterStack& pretrained);

void write_training_log(const std::vector<StepLog>& log, const std::filesystem::path& path,
                        const std::string& config_hash = "");

// ---------------------------------------------------------------------------
// Surrogate pretraining of the frozen towers

struct PretrainConfig {
  std::size_t steps = 500;
  std::size_t batch_size = 64;
  double learning_rate = 3e-3;
  double feature_noise = 0.1;
  std::size_t holdout = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PretrainBatch {
  std::vector<Item> items;
  std::vector<Vector> features;
};

// Base-tower gradients of InfoNCE(caption, image) + InfoNCE("a photo of *"
// with the mapped pseudo token, image) at the fixed initial temperature.
// Keys: token_embedding, position_embedding, text.*.base, visual.base, mapping.*.
EndpointGradients pretrain_gradients(const AdapterStack& stack, const Vocab& vocab, const AttributeSchema& schema,
                                     const PretrainBatch& batch);

struct PretrainResult {
  AdapterStack stack;
  std::vector<double> losses;
  std::vector<Item> holdout;
  double holdout_r_at_1 = 0.0;  // caption -> own feature among the held-out items
};

PretrainResult pretrain_base(const AdapterStack& init, const AttributeSchema& schema, const PretrainConfig& config);

// Caption-to-feature R@1 over `items` (one noisy feature each).
double caption_retrieval_r_at_1(const AdapterStack& stack, const AttributeSchema& schema,
                                const std::vector<Item>& items, double noise, Rng& rng);

}  // namespace lrdm
