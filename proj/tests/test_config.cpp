// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"
#include "lrdm/config.hpp"

using namespace lrdm;
using namespace lrdm::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;  // sentinel: nothing thrown
}

}  // namespace

TEST_CASE("sha256") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("defaults validate and hash stably") {
  const ExperimentConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(config_hash(c).size() == 16);
  CHECK(config_hash(c) == config_hash(ExperimentConfig{}));
  ExperimentConfig moved = c;
  moved.output_dir = "/elsewhere";
  CHECK(config_hash(moved) == config_hash(c));
  ExperimentConfig other = c;
  apply_override(other, "train.steps", "2000");
  CHECK(other.train.steps == 2000);
  CHECK(config_hash(other) != config_hash(c));
  CHECK(c.derived_seed("probe", 0) != c.derived_seed("probe", 1));
  CHECK(c.derived_seed("train") != c.derived_seed("pretrain"));
}

TEST_CASE("overrides") {
  ExperimentConfig c;
  apply_override(c, "train.modes", "endpoint_only, decoupled");
  CHECK(c.train_modes == std::vector<TrainMode>{TrainMode::EndpointOnly, TrainMode::Decoupled});
  apply_override(c, "merge.rules", "ties,lrdm");
  CHECK(c.merge_rules == std::vector<MergeRule>{MergeRule::TIES, MergeRule::LRDM});
  apply_override(c, "sweep.omega_grid", "0,0.5,1");
  CHECK(c.omega_grid == std::vector<double>{0.0, 0.5, 1.0});
  apply_override(c, "train.transition_uses_pre_step_weights", "true");
  CHECK(c.train.transition_uses_pre_step_weights);
  CHECK(split_override("world.noise_sigma=0.2") == std::pair<std::string, std::string>{"world.noise_sigma", "0.2"});

  CHECK(code_of([&] { apply_override(c, "train.stepz", "1"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { apply_override(c, "train.steps", "-3"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { apply_override(c, "train.learning_rate", "fast"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { apply_override(c, "train.modes", "joint,bogus"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { split_override("novalue"); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("validation") {
  ExperimentConfig c;
  c.probe.batches = 5;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigInvalid);
  c = ExperimentConfig{};
  c.alpha_grid = {0.0, 1.5};
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigInvalid);
  c = ExperimentConfig{};
  c.categories = 40;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigInvalid);
  c = ExperimentConfig{};
  c.train.batch_size = 1;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigInvalid);
  c = ExperimentConfig{};
  c.val_gallery = 10;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("ini files") {
  const auto dir = temp_dir("ini");
  {
    std::ofstream f(dir / "a.ini");
    f << "# comment\n[train]\nsteps = 321\nmodes = endpoint_only,decoupled\n\n[world]\nnoise_sigma = 0.05\n";
  }
  const ExperimentConfig c = load_config(dir / "a.ini", {"train.steps=400"});
  CHECK(c.train.steps == 400);
  CHECK(c.noise_sigma == 0.05);
  CHECK(c.train_modes.size() == 2);

  // Round trip through the emitted INI text.
  const ExperimentConfig t = tiny_config();
  {
    std::ofstream f(dir / "b.ini");
    f << config_to_ini(t);
  }
  CHECK(config_hash(load_config(dir / "b.ini")) == config_hash(t));
  CHECK(canonical_config(load_config(dir / "b.ini")) == canonical_config(t));

  {
    std::ofstream f(dir / "bad.ini");
    f << "[train]\nsteps = 10\nunknown_key = 3\n";
  }
  CHECK(code_of([&] { load_config(dir / "bad.ini"); }) == ErrorCode::ConfigInvalid);
  {
    std::ofstream f(dir / "top.ini");
    f << "steps = 10\n";
  }
  CHECK(code_of([&] { load_config(dir / "top.ini"); }) == ErrorCode::ConfigInvalid);
  CHECK(code_of([&] { load_config(dir / "missing.ini"); }) == ErrorCode::ConfigInvalid);
}
