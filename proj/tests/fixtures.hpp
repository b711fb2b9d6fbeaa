// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "lrdm/config.hpp"

namespace lrdm::testing {

// Small but non-trivial world used by most integration tests.
inline ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.categories = 4;
  c.colors = 3;
  c.max_count = 3;
  c.materials = 3;
  c.settings = 3;
  c.train_tuples = 96;
  c.val_queries = 24;
  c.val_gallery = 48;
  c.test_queries = 32;
  c.test_gallery = 64;
  c.d_model = 12;
  c.n_blocks = 2;
  c.max_len = 14;
  c.rank = 3;
  c.pretrain.steps = 30;
  c.pretrain.batch_size = 16;
  c.pretrain.holdout = 20;
  c.train.steps = 20;
  c.train.batch_size = 16;
  c.train.warmup_steps = 4;
  c.probe.batches = 4;
  c.probe.batch_size = 16;
  c.probe_seeds = 2;
  c.ablate_seeds = 2;
  c.alpha_grid = {0.0, 0.5, 1.0};
  c.seed = 11;
  return c;
}

inline EncoderConfig small_encoder(const AttributeSchema& schema, std::size_t d = 10, std::size_t blocks = 2) {
  EncoderConfig e;
  e.d_model = d;
  e.n_blocks = blocks;
  e.max_len = 14;
  e.d_visual_in = schema.feature_dim();
  e.vocab_size = Vocab(schema).size();
  return e;
}

// Adapter stack with random (non-zero) coefficients on both branches.
inline AdapterStack random_stack(const AttributeSchema& schema, std::uint64_t seed, std::size_t d = 10,
                                 std::size_t rank = 3) {
  AdapterConfig a;
  a.rank = rank;
  Rng rng(seed);
  AdapterStack s = init_adapters(small_encoder(schema, d), a, rng);
  Rng fill = rng.split("coeffs");
  for (auto& layer : s.text) {
    for (double& v : layer.coeff_end.values()) v = 0.3 * fill.gaussian();
    for (double& v : layer.coeff_trans.values()) v = 0.3 * fill.gaussian();
  }
  for (double& v : s.visual.coeff.values()) v = 0.3 * fill.gaussian();
  return s;
}

inline AttributeSchema small_schema() { return AttributeSchema::sized(4, 3, 3, 3, 3); }

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("lrdm_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace lrdm::testing

namespace lrdm::testing {

struct SmallSetup {
  ExperimentConfig config;
  World world;
  TrainingData data;
  AdapterStack stack;  // fresh init, zero coefficients
};

inline SmallSetup small_setup(std::uint64_t seed = 11) {
  SmallSetup s;
  s.config = tiny_config();
  s.config.seed = seed;
  Rng rng = Rng(seed).split("world");
  s.world = build_world(s.config.world_options(), rng);
  s.data = prepare_training_data(s.world.schema, s.world.train_items, s.world.train_tuples);
  Rng init = Rng(seed).split("init");
  s.stack = init_adapters(s.config.encoder_config(), s.config.adapter_config(), init);
  return s;
}

// Puts random values in every adapter coefficient so both branches differ.
inline void randomize_coefficients(AdapterStack& s, std::uint64_t seed, double scale = 0.3) {
  Rng fill(seed);
  for (auto& layer : s.text) {
    for (double& v : layer.coeff_end.values()) v = scale * fill.gaussian();
    for (double& v : layer.coeff_trans.values()) v = scale * fill.gaussian();
  }
  for (double& v : s.visual.coeff.values()) v = scale * fill.gaussian();
}

}  // namespace lrdm::testing

namespace lrdm::testing {

// Central-difference derivative of `loss` w.r.t. one entry of a named tensor.
template <typename LossFn>
double fd_entry(const AdapterStack& stack, const std::string& name, std::size_t index, LossFn loss, double h = 1e-6) {
  AdapterStack up = stack, down = stack;
  up.find(name)->values()[index] += h;
  down.find(name)->values()[index] -= h;
  return (loss(up) - loss(down)) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1e-7, std::abs(analytic), std::abs(numeric)});
}

}  // namespace lrdm::testing
