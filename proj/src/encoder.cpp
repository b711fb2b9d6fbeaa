// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lrdm {

void EncoderConfig::validate() const {
  if (d_model < 8) throw Error(ErrorCode::ConfigInvalid, "d_model must be >= 8");
  if (n_blocks < 1) throw Error(ErrorCode::ConfigInvalid, "n_blocks must be >= 1");
  // Longest template: "a photo of * and change the <attr> from <old> to <new>".
  if (max_len < 12) throw Error(ErrorCode::ConfigInvalid, "max_len must be >= 12");
  if (d_visual_in == 0 || vocab_size < 2) throw Error(ErrorCode::ConfigInvalid, "empty visual input or vocab");
}

TowerGrads TowerGrads::zeros_like(const TowerWeights& w, bool with_embeddings) {
  TowerGrads g;
  g.embeddings = with_embeddings;
  if (with_embeddings) {
    g.token_embedding = Matrix(w.token_embedding.rows(), w.token_embedding.cols());
    g.position_embedding = Matrix(w.position_embedding.rows(), w.position_embedding.cols());
  }
  for (const auto& m : w.text) g.text.emplace_back(m.rows(), m.cols());
  g.visual = Matrix(w.visual.rows(), w.visual.cols());
  g.mapping.w1 = Matrix(w.mapping.w1.rows(), w.mapping.w1.cols());
  g.mapping.w2 = Matrix(w.mapping.w2.rows(), w.mapping.w2.cols());
  g.mapping.w3 = Matrix(w.mapping.w3.rows(), w.mapping.w3.cols());
  return g;
}

void TowerGrads::add(const TowerGrads& o, double scale) {
  if (embeddings && o.embeddings) {
    add_scaled_inplace(token_embedding, scale, o.token_embedding);
    add_scaled_inplace(position_embedding, scale, o.position_embedding);
  }
  for (std::size_t l = 0; l < text.size(); ++l) add_scaled_inplace(text[l], scale, o.text[l]);
  add_scaled_inplace(visual, scale, o.visual);
  add_scaled_inplace(mapping.w1, scale, o.mapping.w1);
  add_scaled_inplace(mapping.w2, scale, o.mapping.w2);
  add_scaled_inplace(mapping.w3, scale, o.mapping.w3);
  log_tau += scale * o.log_tau;
}

namespace {

// Gradient of y = z / |z| pulled back to z.
Vector normalize_backward(std::span<const double> y, double z_norm, std::span<const double> gy) {
  const double proj = dot(y, gy);
  Vector gz(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) gz[i] = (gy[i] - y[i] * proj) / z_norm;
  return gz;
}

Vector normalized(std::span<const double> z, double* norm_out) {
  const double n = norm(z);
  if (!(n > kNormEpsilon)) throw Error(ErrorCode::DegenerateNorm, "encoder output has zero norm");
  *norm_out = n;
  Vector y(z.begin(), z.end());
  for (double& v : y) v /= n;
  return y;
}

}  // namespace

TextTrace text_forward(const TowerWeights& w, std::span<const int> ids, const Vector* pseudo) {
  const std::size_t d = w.config.d_model;
  if (ids.empty()) throw Error(ErrorCode::DimMismatch, "empty token sequence");
  if (ids.size() > w.config.max_len) {
    throw Error(ErrorCode::SequenceTooLong, std::to_string(ids.size()) + " > " + std::to_string(w.config.max_len));
  }
  TextTrace t;
  t.ids.assign(ids.begin(), ids.end());
  t.embedded.resize(ids.size());
  Vector h0(d, 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= w.token_embedding.rows()) {
      throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(id));
    }
    std::span<const double> tok;
    if (id == Vocab::kPseudo) {
      if (pseudo == nullptr) throw Error(ErrorCode::MissingPseudo, "prompt contains * but no pseudo token given");
      if (pseudo->size() != d) throw Error(ErrorCode::DimMismatch, "pseudo token dimension");
      tok = *pseudo;
      t.pseudo_pos = static_cast<int>(i);
    } else {
      tok = w.token_embedding.row(static_cast<std::size_t>(id));
    }
    const auto pos = w.position_embedding.row(i);
    Vector& e = t.embedded[i];
    e.resize(d);
    for (std::size_t k = 0; k < d; ++k) e[k] = std::tanh(tok[k] + pos[k]);
    axpy(1.0 / static_cast<double>(ids.size()), e, h0);
  }
  const std::size_t blocks = w.config.n_blocks;
  t.hidden.reserve(blocks + 1);
  t.act.reserve(blocks);
  t.hidden.push_back(std::move(h0));
  Vector u(d);
  for (std::size_t l = 0; l < blocks; ++l) {
    const Vector& prev = t.hidden.back();
    matvec(w.text[l], prev, u);
    Vector a(d);
    Vector h(d);
    for (std::size_t k = 0; k < d; ++k) {
      a[k] = std::tanh(u[k]);
      h[k] = prev[k] + a[k];
    }
    t.act.push_back(std::move(a));
    t.hidden.push_back(std::move(h));
  }
  t.z.resize(d);
  matvec(w.text[blocks], t.hidden.back(), t.z);
  t.out = normalized(t.z, &t.z_norm);
  return t;
}

Vector text_backward(const TowerWeights& w, const TextTrace& t, std::span<const double> grad_out,
                     TowerGrads& grads) {
  const std::size_t d = w.config.d_model;
  const std::size_t blocks = w.config.n_blocks;
  Vector gz = normalize_backward(t.out, t.z_norm, grad_out);
  add_outer(grads.text[blocks], 1.0, gz, t.hidden[blocks]);
  Vector gh(d);
  matvec_transposed(w.text[blocks], gz, gh);
  Vector gu(d);
  Vector tmp(d);
  for (std::size_t l = blocks; l-- > 0;) {
    const Vector& a = t.act[l];
    for (std::size_t k = 0; k < d; ++k) gu[k] = gh[k] * (1.0 - a[k] * a[k]);
    add_outer(grads.text[l], 1.0, gu, t.hidden[l]);
    matvec_transposed(w.text[l], gu, tmp);
    for (std::size_t k = 0; k < d; ++k) gh[k] += tmp[k];
  }
  const double inv_n = 1.0 / static_cast<double>(t.ids.size());
  Vector g_pseudo;
  if (t.pseudo_pos >= 0) g_pseudo.assign(d, 0.0);
  Vector ga(d);
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    const int id = t.ids[i];
    const Vector& e = t.embedded[i];
    for (std::size_t k = 0; k < d; ++k) ga[k] = gh[k] * inv_n * (1.0 - e[k] * e[k]);
    if (id == Vocab::kPseudo) {
      axpy(1.0, ga, g_pseudo);
      if (grads.embeddings) axpy(1.0, ga, grads.position_embedding.row(i));
    } else if (grads.embeddings) {
      axpy(1.0, ga, grads.token_embedding.row(static_cast<std::size_t>(id)));
      axpy(1.0, ga, grads.position_embedding.row(i));
    }
  }
  return g_pseudo;
}

VisualTrace visual_forward(const TowerWeights& w, std::span<const double> feature) {
  if (feature.size() != w.config.d_visual_in) {
    throw Error(ErrorCode::DimMismatch, "visual feature dim " + std::to_string(feature.size()) +
                                            " != " + std::to_string(w.config.d_visual_in));
  }
  VisualTrace t;
  t.input.assign(feature.begin(), feature.end());
  t.projected.resize(w.config.d_model);
  matvec(w.visual, feature, t.projected);
  t.out = normalized(t.projected, &t.norm);
  return t;
}

void visual_backward(const TowerWeights&, const VisualTrace& t, std::span<const double> grad_out,
                     TowerGrads& grads) {
  Vector gv = normalize_backward(t.out, t.norm, grad_out);
  add_outer(grads.visual, 1.0, gv, t.input);
}

MappingTrace mapping_forward(const TowerWeights& w, std::span<const double> input) {
  const std::size_t d = w.config.d_model;
  MappingTrace t;
  t.input.assign(input.begin(), input.end());
  t.a1.resize(d);
  t.a2.resize(d);
  t.out.resize(d);
  matvec(w.mapping.w1, input, t.a1);
  for (double& v : t.a1) v = std::tanh(v);
  matvec(w.mapping.w2, t.a1, t.a2);
  for (double& v : t.a2) v = std::tanh(v);
  matvec(w.mapping.w3, t.a2, t.out);
  return t;
}

Vector mapping_backward(const TowerWeights& w, const MappingTrace& t, std::span<const double> grad_out,
                        TowerGrads& grads) {
  const std::size_t d = w.config.d_model;
  add_outer(grads.mapping.w3, 1.0, grad_out, t.a2);
  Vector g2(d);
  matvec_transposed(w.mapping.w3, grad_out, g2);
  for (std::size_t k = 0; k < d; ++k) g2[k] *= 1.0 - t.a2[k] * t.a2[k];
  add_outer(grads.mapping.w2, 1.0, g2, t.a1);
  Vector g1(d);
  matvec_transposed(w.mapping.w2, g2, g1);
  for (std::size_t k = 0; k < d; ++k) g1[k] *= 1.0 - t.a1[k] * t.a1[k];
  add_outer(grads.mapping.w1, 1.0, g1, t.input);
  Vector g0(t.input.size());
  matvec_transposed(w.mapping.w1, g1, g0);
  return g0;
}

Vector encode_text(const TowerWeights& w, std::span<const int> ids, const Vector* pseudo) {
  return text_forward(w, ids, pseudo).out;
}

Vector encode_visual(const TowerWeights& w, std::span<const double> feature) {
  return visual_forward(w, feature).out;
}

Vector map_visual(const TowerWeights& w, std::span<const double> feature) {
  return mapping_forward(w, encode_visual(w, feature)).out;
}

Tokens compose_prompt(const Tokens& instruction) {
  Tokens out = {"a", "photo", "of", kPseudoToken, "and"};
  out.insert(out.end(), instruction.begin(), instruction.end());
  return out;
}

Tokens source_prompt() { return {"a", "photo", "of", kPseudoToken}; }

double tau_of(double log_tau) { return std::clamp(std::exp(log_tau), kTauMin, kTauMax); }

double dtau_dlog(double log_tau) {
  const double tau = std::exp(log_tau);
  return (tau < kTauMin || tau > kTauMax) ? 0.0 : tau;
}

}  // namespace lrdm
