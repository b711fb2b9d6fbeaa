// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lrdm/encoder.hpp"
#include "lrdm/rng.hpp"
#include "lrdm/tensor.hpp"

namespace lrdm {

enum class BranchId { End, Trans };
enum class PassId { EndpointPass, TransitionPass, JointPass };

struct AdapterConfig {
  std::size_t rank = 8;
  double lora_alpha = 16.0;

  double scale() const { return lora_alpha / static_cast<double>(rank); }
  void validate() const;
  friend bool operator==(const AdapterConfig&, const AdapterConfig&) = default;
};

// One adapted text matrix: W + s * B * A_branch with B shared by both branches.
struct LoraLayer {
  Matrix base;         // d_out x d_in, frozen after pretraining
  Matrix basis;        // B: d_out x r
  Matrix coeff_end;    // A_end: r x d_in
  Matrix coeff_trans;  // A_trans: r x d_in
  double scale = 2.0;

  const Matrix& coeff(BranchId b) const { return b == BranchId::End ? coeff_end : coeff_trans; }
  Matrix& coeff(BranchId b) { return b == BranchId::End ? coeff_end : coeff_trans; }
};

// Single-branch adapter on the visual projection (retrieval pathway only).
struct VisualLora {
  Matrix base;
  Matrix basis;
  Matrix coeff;
  double scale = 2.0;
};

struct AdapterStack {
  EncoderConfig encoder;
  AdapterConfig adapter;
  Matrix token_embedding;
  Matrix position_embedding;
  std::vector<LoraLayer> text;  // residual blocks, then the output projection
  VisualLora visual;
  MappingNetwork mapping;
  Matrix log_tau{1, 1};  // 1x1; tau = clamp(exp(log_tau), 1, 100)
  std::uint64_t seed = 0;

  double tau() const { return tau_of(log_tau(0, 0)); }

  // Folds the requested branch into concrete weights.
  TowerWeights view(BranchId branch) const;

  // Visits every tensor by its checkpoint name, in a fixed order.
  void for_each_tensor(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, const Matrix&)>& fn) const;
  Matrix* find(const std::string& name);
};

AdapterStack init_adapters(const EncoderConfig& encoder, const AdapterConfig& adapter, Rng& rng);

Matrix effective_weight(const LoraLayer& layer, BranchId branch);
Matrix effective_weight(const VisualLora& layer);
Matrix delta_weight(const LoraLayer& layer, BranchId branch);  // s * B * A_branch

// Parameter names updated by each training pass.
std::vector<std::string> trainable_mask(const AdapterStack& stack, PassId pass);

// Chain rule from an effective-weight gradient dW to the low-rank factors:
// dA = s B^T dW, dB = s dW A^T.
void lora_factor_grads(const Matrix& basis, const Matrix& coeff, double scale, const Matrix& grad_weight,
                       Matrix& grad_basis, Matrix& grad_coeff);

// ---------------------------------------------------------------------------
// Checkpoints: "DCIR", u32 version, u32 tensor count, then per tensor
// u32 name length, UTF-8 name, u32 ndim, u32 dims..., f64 values (all LE).

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<std::pair<std::string, Matrix>> tensors;  // 1-D tensors stored as 1 x n
  const Matrix* find(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// config_hash is optional provenance embedded as a metadata tensor.
void save_checkpoint(const AdapterStack& stack, const std::filesystem::path& path,
                     const std::string& config_hash = "");
AdapterStack load_checkpoint(const std::filesystem::path& path);

// Folded deployable weights (dense merge baselines produce these).
void save_tower_checkpoint(const TowerWeights& weights, const std::filesystem::path& path,
                           const std::string& config_hash = "");
TowerWeights load_tower_checkpoint(const std::filesystem::path& path);

// Reads the embedded config hash ("" if absent).
std::string checkpoint_config_hash(const std::filesystem::path& path);

}  // namespace lrdm
