// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace lrdm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::MissingArtifact, p.filename().string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + p.string());
  f << text;
  if (!f) throw Error(ErrorCode::Io, "write failed for " + p.string());
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, p.filename().string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const json& doc) { write_text(p, doc.dump(2) + "\n"); }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string metrics_header() {
  return "r_at_1,r_at_5,r_at_10,rs_at_1,rs_at_2,rs_at_3,map_at_5,map_at_10,map_at_25,map_at_50,shortcut_gap,queries";
}

std::string metrics_cells(const MetricsReport& m) {
  return num(m.r_at_1) + "," + num(m.r_at_5) + "," + num(m.r_at_10) + "," + num(m.rs_at_1) + "," + num(m.rs_at_2) +
         "," + num(m.rs_at_3) + "," + num(m.map_at_5) + "," + num(m.map_at_10) + "," + num(m.map_at_25) + "," +
         num(m.map_at_50) + "," + num(m.shortcut_gap) + "," + std::to_string(m.queries);
}

std::string train_file(TrainMode m) { return "train_" + mode_name(m) + ".ckpt"; }
std::string train_log_file(TrainMode m) { return "train_" + mode_name(m) + "_log.csv"; }
std::string merge_file(MergeRule r) { return "merge_" + rule_name(r) + ".ckpt"; }

ExperimentConfig config_from_canonical(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto [k, v] = split_override(line);
    apply_override(c, k, v);
  }
  return c;
}

TowerWeights weights_for_mode(const AdapterStack& stack, TrainMode mode, double alpha) {
  if (mode == TrainMode::Decoupled) return lrdm_merge(stack, alpha).view(BranchId::End);
  return stack.view(inference_branch(mode));
}

}  // namespace

// ---------------------------------------------------------------------------

Pipeline::Pipeline(ExperimentConfig config) : Pipeline(config, config.output_dir) {}

Pipeline::Pipeline(ExperimentConfig config, fs::path output_dir)
    : config_(std::move(config)), dir_(std::move(output_dir)) {
  config_.output_dir = dir_.string();
  config_.validate();
  hash_ = config_hash(config_);
}

fs::path Pipeline::require(const std::string& file) const {
  const fs::path p = path(file);
  if (!fs::exists(p)) throw Error(ErrorCode::MissingArtifact, file);
  const std::string found = artifact_config_hash(p);
  check_hash(file, found);
  return p;
}

void Pipeline::check_hash(const std::string& file, const std::string& found) const {
  if (!found.empty() && found != hash_)
    throw Error(ErrorCode::MixedConfig, file + " was written under config " + found + ", current config is " + hash_);
}

RetrievalBenchmark Pipeline::truncate(const RetrievalBenchmark& bench, std::size_t max_queries) {
  if (max_queries == 0 || max_queries >= bench.queries.size()) return bench;
  RetrievalBenchmark out = bench;
  out.queries.resize(max_queries);
  return out;
}

void Pipeline::gen() {
  fs::create_directories(dir_);
  Rng rng = Rng(config_.seed).split("world");
  const World world = build_world(config_.world_options(), rng);
  write_text(path("config.canonical"), canonical_config(config_));
  export_tuples(world.train_tuples, path("tuples.jsonl"));
  save_benchmark(world.validation, path("benchmark_val.json"), hash_);
  save_benchmark(world.test, path("benchmark_test.json"), hash_);
  json manifest;
  manifest["config_hash"] = hash_;
  manifest["tuples_sha256"] = file_sha256(path("tuples.jsonl"));
  manifest["train_tuples"] = world.train_tuples.size();
  manifest["validation_queries"] = world.validation.queries.size();
  manifest["test_queries"] = world.test.queries.size();
  write_json(path("gen_manifest.json"), manifest);
}

LoadedWorld Pipeline::load_world() const {
  const json manifest = read_json(require("gen_manifest.json"));
  const fs::path tuples_path = path("tuples.jsonl");
  if (!fs::exists(tuples_path)) throw Error(ErrorCode::MissingArtifact, "tuples.jsonl");
  if (manifest.value("tuples_sha256", "") != file_sha256(tuples_path))
    throw Error(ErrorCode::MixedConfig, "tuples.jsonl does not match gen_manifest.json");

  LoadedWorld w;
  w.schema = config_.world_options().schema;
  ImportResult imported = import_tuples(tuples_path);
  if (imported.skipped != 0)
    throw Error(ErrorCode::MalformedRecord, std::to_string(imported.skipped) + " malformed records in tuples.jsonl");
  w.train_tuples = std::move(imported.tuples);
  std::set<int> seen;
  for (const EditTuple& t : w.train_tuples) {
    if (!seen.insert(t.ref_item_id).second) continue;
    auto item = parse_caption(w.schema, t.source_caption, t.ref_item_id);
    if (!item) throw Error(ErrorCode::MalformedRecord, "unparseable source caption for item " + std::to_string(t.ref_item_id));
    w.train_items.push_back(*item);
  }
  w.validation = load_benchmark(require("benchmark_val.json"));
  w.test = load_benchmark(require("benchmark_test.json"));
  return w;
}

AdapterStack Pipeline::load_stack(const std::string& file) const { return load_checkpoint(require(file)); }

void Pipeline::pretrain() {
  const LoadedWorld world = load_world();
  const EncoderConfig ec = config_.encoder_config();
  Rng init_rng = Rng(config_.seed).split("init");
  const AdapterStack init = init_adapters(ec, config_.adapter_config(), init_rng);
  PretrainConfig pc = config_.pretrain;
  pc.seed = config_.derived_seed("pretrain");
  pc.feature_noise = config_.noise_sigma;
  const PretrainResult res = pretrain_base(init, world.schema, pc);
  save_checkpoint(res.stack, path("pretrain.ckpt"), hash_);

  std::string log = "# config_hash=" + hash_ + "\nstep,loss\n";
  for (std::size_t i = 0; i < res.losses.size(); ++i) log += std::to_string(i) + "," + num(res.losses[i]) + "\n";
  write_text(path("pretrain_log.csv"), log);

  json doc;
  doc["config_hash"] = hash_;
  doc["steps"] = pc.steps;
  doc["final_loss"] = res.losses.empty() ? 0.0 : res.losses.back();
  doc["holdout_items"] = res.holdout.size();
  doc["holdout_r_at_1"] = res.holdout_r_at_1;
  write_json(path("pretrain.json"), doc);
}

void Pipeline::train() {
  const LoadedWorld world = load_world();
  const TrainingData data = prepare_training_data(world.schema, world.train_items, world.train_tuples);
  const AdapterStack base = load_stack("pretrain.ckpt");
  for (TrainMode mode : config_.train_modes) {
    TrainConfig tc = config_.train;
    tc.mode = mode;
    tc.seed = config_.derived_seed("train");
    tc.feature_noise = config_.noise_sigma;
    const TrainResult res = run_training(tc, data, base);
    save_checkpoint(res.stack, path(train_file(mode)), hash_);
    write_training_log(res.log, path(train_log_file(mode)), hash_);
  }
}

void Pipeline::probe() {
  const LoadedWorld world = load_world();
  const TrainingData data = prepare_training_data(world.schema, world.train_items, world.train_tuples);
  const AdapterStack stack = load_stack(train_file(TrainMode::JointShared));
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < config_.probe_seeds; ++i) seeds.push_back(config_.derived_seed("probe", i));
  ProbeConfig pc = config_.probe;
  pc.omega = config_.train.omega;
  pc.feature_noise = config_.noise_sigma;
  const GradProbeReport report = probe_report(stack, seeds, data, pc);
  write_probe_csv(report, path("probe.csv"), hash_);
  json doc = probe_to_json(report);
  doc["config_hash"] = hash_;
  write_json(path("probe.json"), doc);
}

void Pipeline::sweep() {
  const LoadedWorld world = load_world();
  const AdapterStack stack = load_stack(train_file(TrainMode::Decoupled));
  const std::size_t mq = config_.eval_max_queries;
  const auto rows = alpha_sweep(stack, config_.alpha_grid, world.validation, mq);
  const double a_star = best_alpha(rows);
  write_sweep_csv(rows, path("alpha_sweep.csv"), hash_);

  json doc;
  doc["config_hash"] = hash_;
  doc["alpha_star"] = a_star;
  doc["split"] = "validation";
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"alpha", r.alpha}, {"r_at_1", r.metrics.r_at_1}, {"shortcut_gap", r.metrics.shortcut_gap}});
  doc["alpha"] = arr;

  if (!config_.omega_grid.empty() || !config_.lambda_grid.empty()) {
    const TrainingData data = prepare_training_data(world.schema, world.train_items, world.train_tuples);
    const AdapterStack base = load_stack("pretrain.ckpt");
    TrainConfig tc = config_.train;
    tc.seed = config_.derived_seed("train");
    tc.feature_noise = config_.noise_sigma;
    if (!config_.omega_grid.empty()) {
      std::string csv = "# config_hash=" + hash_ + "\nomega,alpha_star,r_at_1,shortcut_gap\n";
      for (double omega : config_.omega_grid) {
        TrainConfig c = tc;
        c.mode = TrainMode::Decoupled;
        c.omega = omega;
        const TrainResult res = run_training(c, data, base);
        const auto sweep_rows = alpha_sweep(res.stack, config_.alpha_grid, world.validation, mq);
        const double a = best_alpha(sweep_rows);
        const auto it = std::find_if(sweep_rows.begin(), sweep_rows.end(), [&](const SweepRow& r) { return r.alpha == a; });
        csv += num(omega) + "," + num(a) + "," + num(it->metrics.r_at_1) + "," + num(it->metrics.shortcut_gap) + "\n";
      }
      write_text(path("omega_sweep.csv"), csv);
    }
    if (!config_.lambda_grid.empty()) {
      std::string csv = "# config_hash=" + hash_ + "\nlambda_trans,r_at_1,shortcut_gap\n";
      for (double lambda : config_.lambda_grid) {
        TrainConfig c = tc;
        c.mode = TrainMode::JointShared;
        c.lambda_trans = lambda;
        const TrainResult res = run_training(c, data, base);
        const MetricsReport m = evaluate(world.validation, res.stack.view(BranchId::End), mq);
        csv += num(lambda) + "," + num(m.r_at_1) + "," + num(m.shortcut_gap) + "\n";
      }
      write_text(path("lambda_sweep.csv"), csv);
    }
  }
  write_json(path("sweep.json"), doc);
}

double Pipeline::alpha_star() const {
  const json doc = read_json(require("sweep.json"));
  return doc.at("alpha_star").get<double>();
}

void Pipeline::merge() {
  const AdapterStack stack = load_stack(train_file(TrainMode::Decoupled));
  for (MergeRule rule : config_.merge_rules) {
    MergeSpec spec = config_.merge;
    spec.rule = rule;
    spec.seed = config_.derived_seed("dare");
    if (rule == MergeRule::LRDM) {
      save_checkpoint(lrdm_merge(stack, spec.alpha), path(merge_file(rule)), hash_);
    } else {
      save_tower_checkpoint(merged_weights(stack, spec), path(merge_file(rule)), hash_);
    }
  }
}

void Pipeline::eval() {
  const LoadedWorld world = load_world();
  const RetrievalBenchmark test = truncate(world.test, config_.eval_max_queries);
  const bool need_alpha =
      std::find(config_.train_modes.begin(), config_.train_modes.end(), TrainMode::Decoupled) != config_.train_modes.end();
  const double a_star = need_alpha ? alpha_star() : 0.0;

  std::vector<std::pair<std::string, MetricsReport>> results;
  results.emplace_back("pretrain", evaluate(test, load_stack("pretrain.ckpt").view(BranchId::End)));
  for (TrainMode mode : config_.train_modes) {
    const AdapterStack stack = load_stack(train_file(mode));
    results.emplace_back(mode_name(mode), evaluate(test, weights_for_mode(stack, mode, a_star)));
  }
  for (MergeRule rule : config_.merge_rules) {
    const fs::path p = require(merge_file(rule));
    const TowerWeights w = rule == MergeRule::LRDM ? load_checkpoint(p).view(BranchId::End) : load_tower_checkpoint(p);
    results.emplace_back("merge_" + rule_name(rule), evaluate(test, w));
  }

  json doc;
  doc["config_hash"] = hash_;
  doc["alpha_star"] = a_star;
  doc["merge_alpha"] = config_.merge.alpha;
  json models = json::object();
  std::string csv = "# config_hash=" + hash_ + "\nmodel," + metrics_header() + "\n";
  for (const auto& [name, m] : results) {
    models[name] = metrics_to_json(m);
    csv += name + "," + metrics_cells(m) + "\n";
  }
  doc["models"] = models;
  write_json(path("eval.json"), doc);
  write_text(path("eval.csv"), csv);
}

std::vector<AblationSummaryRow> summarize_ablation(const std::vector<AblationRow>& rows,
                                                   const std::vector<TrainMode>& modes) {
  std::vector<AblationSummaryRow> out;
  for (TrainMode mode : modes) {
    std::vector<const AblationRow*> sel;
    for (const auto& r : rows)
      if (r.mode == mode) sel.push_back(&r);
    if (sel.empty()) continue;
    AblationSummaryRow s;
    s.mode = mode;
    const double n = static_cast<double>(sel.size());
    for (const auto* r : sel) {
      s.r_at_1_mean += r->test.r_at_1 / n;
      s.shortcut_gap_mean += r->test.shortcut_gap / n;
      s.map_at_10_mean += r->test.map_at_10 / n;
    }
    if (sel.size() > 1) {
      double ss = 0.0;
      for (const auto* r : sel) ss += (r->test.r_at_1 - s.r_at_1_mean) * (r->test.r_at_1 - s.r_at_1_mean);
      s.r_at_1_std = std::sqrt(ss / (n - 1.0));
    }
    out.push_back(s);
  }
  return out;
}

AblationResult Pipeline::ablate() {
  const LoadedWorld world = load_world();
  const TrainingData data = prepare_training_data(world.schema, world.train_items, world.train_tuples);
  const AdapterStack base = load_stack("pretrain.ckpt");
  const RetrievalBenchmark test = truncate(world.test, config_.eval_max_queries);

  std::vector<TrainMode> modes;
  for (TrainMode m : kAllModes)
    if (std::find(config_.train_modes.begin(), config_.train_modes.end(), m) != config_.train_modes.end())
      modes.push_back(m);

  AblationResult result;
  for (std::size_t s = 0; s < config_.ablate_seeds; ++s) {
    const std::uint64_t seed = config_.derived_seed("ablate", s);
    for (TrainMode mode : modes) {
      TrainConfig tc = config_.train;
      tc.mode = mode;
      tc.seed = seed;
      tc.feature_noise = config_.noise_sigma;
      TrainResult res = run_training(tc, data, base);
      AblationRow row;
      row.seed_index = s;
      row.seed = seed;
      row.mode = mode;
      if (mode == TrainMode::Decoupled) {
        row.alpha = best_alpha(alpha_sweep(res.stack, config_.alpha_grid, world.validation, config_.eval_max_queries));
      }
      row.test = evaluate(test, weights_for_mode(res.stack, mode, row.alpha));
      result.rows.push_back(row);
      if (mode == TrainMode::JointShared) result.joint_shared.push_back(std::move(res.stack));
    }
  }
  result.summary = summarize_ablation(result.rows, modes);

  fs::create_directories(dir_);
  std::string csv = "# config_hash=" + hash_ + "\nseed_index,seed,mode,label,alpha,r_at_1,r_at_5,r_at_10,map_at_10,shortcut_gap\n";
  for (const auto& r : result.rows) {
    csv += std::to_string(r.seed_index) + "," + std::to_string(r.seed) + "," + mode_name(r.mode) + "," +
           mode_label(r.mode) + "," + num(r.alpha) + "," + num(r.test.r_at_1) + "," + num(r.test.r_at_5) + "," +
           num(r.test.r_at_10) + "," + num(r.test.map_at_10) + "," + num(r.test.shortcut_gap) + "\n";
  }
  write_text(path("ablate.csv"), csv);
  std::string summary = "# config_hash=" + hash_ + "\nmode,label,seeds,r_at_1_mean,r_at_1_std,map_at_10_mean,shortcut_gap_mean\n";
  for (const auto& s : result.summary) {
    summary += mode_name(s.mode) + "," + mode_label(s.mode) + "," + std::to_string(config_.ablate_seeds) + "," +
               num(s.r_at_1_mean) + "," + num(s.r_at_1_std) + "," + num(s.map_at_10_mean) + "," +
               num(s.shortcut_gap_mean) + "\n";
  }
  write_text(path("ablate_summary.csv"), summary);
  return result;
}

json Pipeline::report() const {
  const json doc = build_report(dir_);
  if (doc.at("config_hash").get<std::string>() != hash_)
    throw Error(ErrorCode::MixedConfig, "run directory was produced under config " +
                                            doc.at("config_hash").get<std::string>());
  write_json(path("report.json"), doc);
  return doc;
}

json Pipeline::run_all() {
  gen();
  pretrain();
  train();
  probe();
  sweep();
  merge();
  eval();
  return report();
}

// ---------------------------------------------------------------------------

std::vector<std::string> expected_artifacts(const ExperimentConfig& config) {
  std::vector<std::string> files = {"config.canonical", "gen_manifest.json", "tuples.jsonl", "benchmark_val.json",
                                    "benchmark_test.json", "pretrain.ckpt", "pretrain_log.csv", "pretrain.json"};
  for (TrainMode m : config.train_modes) {
    files.push_back(train_file(m));
    files.push_back(train_log_file(m));
  }
  files.insert(files.end(), {"probe.csv", "probe.json", "alpha_sweep.csv", "sweep.json"});
  if (!config.omega_grid.empty()) files.push_back("omega_sweep.csv");
  if (!config.lambda_grid.empty()) files.push_back("lambda_sweep.csv");
  for (MergeRule r : config.merge_rules) files.push_back(merge_file(r));
  files.insert(files.end(), {"eval.json", "eval.csv"});
  return files;
}

std::string artifact_config_hash(const fs::path& file) {
  const std::string ext = file.extension().string();
  const std::string name = file.filename().string();
  if (name == "config.canonical") return sha256_hex(read_text(file)).substr(0, 16);
  if (ext == ".ckpt") return checkpoint_config_hash(file);
  if (ext == ".json") return read_json(file).value("config_hash", "");
  if (ext == ".csv") {
    const std::string text = read_text(file);
    const std::string prefix = "# config_hash=";
    if (text.rfind(prefix, 0) != 0) return "";
    return text.substr(prefix.size(), text.find('\n') - prefix.size());
  }
  return "";
}

json build_report(const fs::path& dir) {
  const fs::path canonical = dir / "config.canonical";
  if (!fs::exists(canonical)) throw Error(ErrorCode::MissingArtifact, "config.canonical");
  const ExperimentConfig config = config_from_canonical(read_text(canonical));
  const std::string hash = artifact_config_hash(canonical);
  if (hash != config_hash(config)) throw Error(ErrorCode::MixedConfig, "config.canonical is not in canonical form");

  std::vector<std::string> files = expected_artifacts(config);
  for (const char* optional : {"ablate.csv", "ablate_summary.csv"})
    if (fs::exists(dir / optional)) files.push_back(optional);

  json artifacts = json::object();
  for (const std::string& f : files) {
    const fs::path p = dir / f;
    if (!fs::exists(p)) throw Error(ErrorCode::MissingArtifact, f);
    const std::string found = artifact_config_hash(p);
    if (!found.empty() && found != hash)
      throw Error(ErrorCode::MixedConfig, f + " was written under config " + found + ", expected " + hash);
    artifacts[f] = file_sha256(p);
  }
  const json manifest = read_json(dir / "gen_manifest.json");
  if (manifest.value("tuples_sha256", "") != artifacts["tuples.jsonl"].get<std::string>())
    throw Error(ErrorCode::MixedConfig, "tuples.jsonl does not match gen_manifest.json");
  if (!manifest.contains("config_hash")) throw Error(ErrorCode::MixedConfig, "gen_manifest.json has no config hash");

  json headline;
  headline["pretrain_holdout_r_at_1"] = read_json(dir / "pretrain.json").at("holdout_r_at_1");
  headline["alpha_star"] = read_json(dir / "sweep.json").at("alpha_star");
  const json eval = read_json(dir / "eval.json");
  json models = json::object();
  for (const auto& [name, m] : eval.at("models").items())
    models[name] = {{"r_at_1", m.at("r_at_1")}, {"shortcut_gap", m.at("shortcut_gap")}, {"map_at_10", m.at("map_at_10")}};
  headline["test"] = models;
  const json probe = read_json(dir / "probe.json");
  json gi = json::array();
  for (const auto& layer : probe.at("layers")) gi.push_back(layer.at("gi_mean"));
  headline["probe_gi_mean"] = gi;

  json doc;
  doc["config_hash"] = hash;
  doc["artifacts"] = artifacts;
  doc["headline"] = headline;
  return doc;
}

}  // namespace lrdm
