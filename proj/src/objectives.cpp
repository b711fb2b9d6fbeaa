// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lrdm/synthworld.hpp"

namespace lrdm {

EndpointLoss endpoint_loss(std::span<const Vector> queries, std::span<const Vector> targets, double log_tau) {
  const std::size_t n = queries.size();
  if (n == 0 || targets.size() != n) throw Error(ErrorCode::DimMismatch, "endpoint_loss batch sizes");
  const double tau = tau_of(log_tau);

  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) sim(i, j) = dot(queries[i], targets[j]);

  // Row softmax (query -> targets) and column softmax (target -> queries).
  Matrix row_p(n, n), col_p(n, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, tau * sim(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(tau * sim(i, j) - mx);
    for (std::size_t j = 0; j < n; ++j) row_p(i, j) = std::exp(tau * sim(i, j) - mx) / z;
    loss += -(tau * sim(i, i) - mx - std::log(z));
  }
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, tau * sim(i, j));
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(tau * sim(i, j) - mx);
    for (std::size_t i = 0; i < n; ++i) col_p(i, j) = std::exp(tau * sim(i, j) - mx) / z;
    loss += -(tau * sim(j, j) - mx - std::log(z));
  }
  const double norm_factor = 1.0 / (2.0 * static_cast<double>(n));
  EndpointLoss out;
  out.loss = loss * norm_factor;
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::NonFiniteLoss, "endpoint loss is not finite");

  // dL/dlogit_ij = norm_factor * (row_p + col_p - 2 * [i == j]).
  const std::size_t d = queries[0].size();
  out.grad_queries.assign(n, Vector(d, 0.0));
  out.grad_targets.assign(n, Vector(d, 0.0));
  double grad_tau = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double g = norm_factor * (row_p(i, j) + col_p(i, j) - (i == j ? 2.0 : 0.0));
      grad_tau += g * sim(i, j);
      axpy(g * tau, targets[j], out.grad_queries[i]);
      axpy(g * tau, queries[i], out.grad_targets[j]);
    }
  }
  out.grad_log_tau = grad_tau * dtau_dlog(log_tau);
  return out;
}

Vector source_anchor(const TowerWeights& w, std::span<const int> source_caption, std::span<const int> source_prompt,
                     std::span<const double> ref_feature, double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "omega must lie in [0, 1]");
  const Vector caption = encode_text(w, source_caption);
  if (omega == 0.0) return caption;
  const Vector pseudo = map_visual(w, ref_feature);
  const Vector image = encode_text(w, source_prompt, &pseudo);
  Vector anchor(caption.size());
  for (std::size_t k = 0; k < anchor.size(); ++k) anchor[k] = (1.0 - omega) * caption[k] + omega * image[k];
  return anchor;
}

Vector transition_delta(const TowerWeights& w, std::span<const int> target_caption, std::span<const double> anchor) {
  if (!all_finite(anchor)) throw Error(ErrorCode::NonFiniteLoss, "source anchor is not finite");
  Vector delta = encode_text(w, target_caption);
  if (delta.size() != anchor.size()) throw Error(ErrorCode::DimMismatch, "anchor dimension");
  for (std::size_t k = 0; k < delta.size(); ++k) delta[k] -= anchor[k];
  const double n = norm(delta);
  if (!(n > kDeltaEpsilon)) throw Error(ErrorCode::DegenerateDelta, "|delta| = " + std::to_string(n));
  return delta;
}

CosineLoss cosine_loss(std::span<const double> f, std::span<const double> direction) {
  if (f.size() != direction.size()) throw Error(ErrorCode::DimMismatch, "cosine_loss");
  const double nf = norm(f);
  const double nd = norm(direction);
  if (!(nf > kNormEpsilon) || !(nd > kNormEpsilon)) throw Error(ErrorCode::DegenerateNorm, "cosine_loss");
  const double c = dot(f, direction) / (nf * nd);
  CosineLoss out;
  out.loss = 1.0 - c;
  // d cos / d f = direction / (|f||d|) - cos * f / |f|^2
  out.grad.resize(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) out.grad[k] = -(direction[k] / (nf * nd) - c * f[k] / (nf * nf));
  return out;
}

TransitionLoss transition_loss(std::span<const double> f_fwd, std::span<const double> f_rev,
                               std::span<const double> delta) {
  if (!(norm(delta) > kDeltaEpsilon)) throw Error(ErrorCode::DegenerateDelta, "transition_loss");
  Vector neg(delta.begin(), delta.end());
  for (double& v : neg) v = -v;
  CosineLoss fwd = cosine_loss(f_fwd, delta);
  CosineLoss rev = cosine_loss(f_rev, neg);
  TransitionLoss out;
  out.l_fwd = fwd.loss;
  out.l_rev = rev.loss;
  out.grad_fwd = std::move(fwd.grad);
  out.grad_rev = std::move(rev.grad);
  return out;
}

TransitionLoss transition_loss(const TowerWeights& w, std::span<const int> fwd_ids, std::span<const int> rev_ids,
                               std::span<const double> delta, double grad_scale, TowerGrads* grads) {
  const TextTrace fwd = text_forward(w, fwd_ids, nullptr);
  const TextTrace rev = text_forward(w, rev_ids, nullptr);
  TransitionLoss out = transition_loss(fwd.out, rev.out, delta);
  if (grads != nullptr) {
    for (double& g : out.grad_fwd) g *= grad_scale;
    for (double& g : out.grad_rev) g *= grad_scale;
    text_backward(w, fwd, out.grad_fwd, *grads);
    text_backward(w, rev, out.grad_rev, *grads);
  }
  return out;
}

double joint_loss(double l_end, double l_trans, double lambda_trans) {
  if (!(lambda_trans >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "lambda_trans must be >= 0");
  return l_end + lambda_trans * l_trans;
}

std::pair<Vector, Vector> pcgrad_project(std::span<const double> g_end, std::span<const double> g_trans) {
  if (g_end.size() != g_trans.size()) throw Error(ErrorCode::DimMismatch, "pcgrad");
  Vector e(g_end.begin(), g_end.end());
  Vector t(g_trans.begin(), g_trans.end());
  const double cross = dot(g_end, g_trans);
  if (!(cross < 0.0)) return {std::move(e), std::move(t)};
  // End onto trans first, then trans onto end; both against the originals.
  const double end_coef = cross / dot(g_trans, g_trans);
  const double trans_coef = cross / dot(g_end, g_end);
  for (std::size_t k = 0; k < e.size(); ++k) {
    e[k] = g_end[k] - end_coef * g_trans[k];
    t[k] = g_trans[k] - trans_coef * g_end[k];
  }
  return {std::move(e), std::move(t)};
}

Vector pcgrad_combine(std::span<const double> g_end, std::span<const double> g_trans) {
  auto [e, t] = pcgrad_project(g_end, g_trans);
  for (std::size_t k = 0; k < e.size(); ++k) e[k] += t[k];
  return e;
}

}  // namespace lrdm
