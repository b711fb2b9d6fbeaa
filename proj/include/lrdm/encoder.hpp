// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lrdm/synthworld.hpp"
#include "lrdm/tensor.hpp"

namespace lrdm {

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_blocks = 4;
  std::size_t max_len = 24;
  std::size_t d_visual_in = 38;
  std::size_t vocab_size = 0;

  void validate() const;  // throws ConfigInvalid
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Three weight matrices with tanh between them; no biases.
struct MappingNetwork {
  Matrix w1, w2, w3;
  friend bool operator==(const MappingNetwork&, const MappingNetwork&) = default;
};

// Concrete weights of one deployable pathway: adapters already folded into
// the text and visual matrices. text[0..n_blocks-1] are the residual blocks,
// text[n_blocks] is the output projection.
struct TowerWeights {
  EncoderConfig config;
  Matrix token_embedding;     // vocab x d_model
  Matrix position_embedding;  // max_len x d_model
  std::vector<Matrix> text;   // n_blocks + 1 matrices, each d_model x d_model
  Matrix visual;              // d_model x d_visual_in
  MappingNetwork mapping;
  double log_tau = 0.0;
};

// Gradient accumulator with the same shape as TowerWeights. Embedding-table
// gradients are only accumulated when `embeddings` is set.
struct TowerGrads {
  bool embeddings = false;
  Matrix token_embedding;
  Matrix position_embedding;
  std::vector<Matrix> text;
  Matrix visual;
  MappingNetwork mapping;
  double log_tau = 0.0;

  static TowerGrads zeros_like(const TowerWeights& w, bool with_embeddings);
  void add(const TowerGrads& other, double scale = 1.0);
};

// Forward intermediates kept for the backward pass.
struct TextTrace {
  std::vector<int> ids;
  int pseudo_pos = -1;
  std::vector<Vector> embedded;  // tanh(token + position), per position
  std::vector<Vector> hidden;    // h_0 .. h_L
  std::vector<Vector> act;       // tanh(W_l h_{l-1}), l = 1..L
  Vector z;                      // pre-normalisation output
  double z_norm = 0.0;
  Vector out;                    // unit-norm embedding
};

struct VisualTrace {
  Vector input;
  Vector projected;
  double norm = 0.0;
  Vector out;
};

struct MappingTrace {
  Vector input;
  Vector a1, a2;  // tanh activations
  Vector out;
};

TextTrace text_forward(const TowerWeights& w, std::span<const int> ids, const Vector* pseudo);
// Accumulates parameter gradients into `grads`; returns the gradient with
// respect to the injected pseudo token (empty if the prompt has none).
Vector text_backward(const TowerWeights& w, const TextTrace& trace, std::span<const double> grad_out,
                     TowerGrads& grads);

VisualTrace visual_forward(const TowerWeights& w, std::span<const double> feature);
void visual_backward(const TowerWeights& w, const VisualTrace& trace, std::span<const double> grad_out,
                     TowerGrads& grads);

MappingTrace mapping_forward(const TowerWeights& w, std::span<const double> input);
Vector mapping_backward(const TowerWeights& w, const MappingTrace& trace, std::span<const double> grad_out,
                        TowerGrads& grads);

// Convenience wrappers.
Vector encode_text(const TowerWeights& w, std::span<const int> ids, const Vector* pseudo = nullptr);
Vector encode_visual(const TowerWeights& w, std::span<const double> feature);
Vector map_visual(const TowerWeights& w, std::span<const double> feature);

// "a photo of * and <instruction>"
Tokens compose_prompt(const Tokens& instruction);
// "a photo of *"
Tokens source_prompt();

double tau_of(double log_tau);
// d tau / d log_tau, zero where the clamp is active.
double dtau_dlog(double log_tau);
inline constexpr double kTauMin = 1.0;
inline constexpr double kTauMax = 100.0;

}  // namespace lrdm
