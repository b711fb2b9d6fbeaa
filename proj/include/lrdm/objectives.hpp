// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "lrdm/encoder.hpp"
#include "lrdm/tensor.hpp"

namespace lrdm {

inline constexpr double kDeltaEpsilon = 1e-6;
inline constexpr double kDefaultOmega = 0.25;

struct LossBreakdown {
  double l_end = 0.0;
  double l_fwd = 0.0;
  double l_rev = 0.0;
  double l_trans = 0.0;  // l_fwd + l_rev
  std::size_t skipped_degenerate = 0;
};

struct EndpointLoss {
  double loss = 0.0;
  std::vector<Vector> grad_queries;
  std::vector<Vector> grad_targets;
  double grad_log_tau = 0.0;
};

// Symmetric InfoNCE over a batch of matched (query, target) pairs with logits
// tau * <q_i, t_j>, averaged over the batch.
EndpointLoss endpoint_loss(std::span<const Vector> queries, std::span<const Vector> targets, double log_tau);

// (1 - omega) * E(c_src) + omega * E("a photo of *", s_ref), not renormalised.
Vector source_anchor(const TowerWeights& w, std::span<const int> source_caption, std::span<const int> source_prompt,
                     std::span<const double> ref_feature, double omega);

// target - anchor; throws DegenerateDelta when the norm is <= kDeltaEpsilon.
// The result is a constant for the transition loss (no gradient flows back).
Vector transition_delta(const TowerWeights& w, std::span<const int> target_caption, std::span<const double> anchor);

struct CosineLoss {
  double loss = 0.0;  // 1 - cos(f, direction)
  Vector grad;        // d loss / d f
};
CosineLoss cosine_loss(std::span<const double> f, std::span<const double> direction);

struct TransitionLoss {
  double l_fwd = 0.0;
  double l_rev = 0.0;
  Vector grad_fwd;  // gradients w.r.t. the instruction embeddings
  Vector grad_rev;
};

// L_fwd = 1 - cos(f_fwd, delta), L_rev = 1 - cos(f_rev, -delta).
TransitionLoss transition_loss(std::span<const double> f_fwd, std::span<const double> f_rev,
                               std::span<const double> delta);

// Encoder-level variant: runs the instruction encodings on `w`, accumulates
// their parameter gradients (scaled by `grad_scale`) and returns the losses.
TransitionLoss transition_loss(const TowerWeights& w, std::span<const int> fwd_ids, std::span<const int> rev_ids,
                               std::span<const double> delta, double grad_scale, TowerGrads* grads);

double joint_loss(double l_end, double l_trans, double lambda_trans);

// Gradient surgery for two objectives with a fixed projection order. When
// g_end . g_trans < 0 each gradient loses its component along the other
// (original) gradient; otherwise both are returned unchanged.
std::pair<Vector, Vector> pcgrad_project(std::span<const double> g_end, std::span<const double> g_trans);
Vector pcgrad_combine(std::span<const double> g_end, std::span<const double> g_trans);

}  // namespace lrdm
