// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "lrdm/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct StageInfo {
  const char* name;
  const char* help;
};
const StageInfo kStages[] = {
    {"gen", "generate edit tuples and the validation/test benchmarks"},
    {"pretrain", "pretrain the base towers on captions"},
    {"train", "train adapters for every configured mode"},
    {"probe", "measure gradient interference on the joint checkpoint"},
    {"merge", "merge the decoupled branches with each configured rule"},
    {"eval", "evaluate base, trained and merged models on the test split"},
    {"sweep", "sweep the merge coefficient (and omega/lambda grids) on validation"},
    {"ablate", "multi-seed ablation over all training modes"},
    {"report", "summarise a run directory into report.json"},
    {"all", "gen, pretrain, train, probe, sweep, merge, eval, report"},
};

void print_ablation(const lrdm::AblationResult& res) {
  std::cout << "mode,label,r_at_1_mean,r_at_1_std,map_at_10_mean,shortcut_gap_mean\n";
  for (const auto& s : res.summary) {
    std::cout << lrdm::mode_name(s.mode) << "," << lrdm::mode_label(s.mode) << "," << s.r_at_1_mean << ","
              << s.r_at_1_std << "," << s.map_at_10_mean << "," << s.shortcut_gap_mean << "\n";
  }
}

int run(const std::string& stage, const std::string& config_path, const std::vector<std::string>& overrides,
        const std::string& out_flag, const std::string& report_dir) {
  if (stage == "report" && !report_dir.empty()) {
    std::cout << lrdm::build_report(report_dir).dump(2) << "\n";
    return kExitOk;
  }
  lrdm::ExperimentConfig config = lrdm::load_config(config_path, overrides);
  if (const char* env = std::getenv("LRDM_OUT_DIR"); env != nullptr && *env != '\0') config.output_dir = env;
  if (!out_flag.empty()) config.output_dir = out_flag;
  lrdm::Pipeline p(config);
  std::cerr << "[lrdm] " << stage << " -> " << p.dir().string() << " (config " << p.hash() << ")\n";
  if (stage == "gen") p.gen();
  else if (stage == "pretrain") p.pretrain();
  else if (stage == "train") p.train();
  else if (stage == "probe") p.probe();
  else if (stage == "merge") p.merge();
  else if (stage == "eval") p.eval();
  else if (stage == "sweep") p.sweep();
  else if (stage == "ablate") print_ablation(p.ablate());
  else if (stage == "report") std::cout << p.report().dump(2) << "\n";
  else if (stage == "all") std::cout << p.run_all().dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lrdm: decoupled low-rank adapter experiments on a synthetic composed-retrieval world"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string report_dir;

  for (const auto& [name, help] : kStages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "INI config file (defaults apply when omitted)");
    sub->add_option("-s,--set", overrides, "override a key, e.g. --set train.steps=2000")->take_all();
    sub->add_option("-o,--out", out_dir, "output directory (overrides run.output_dir and LRDM_OUT_DIR)");
    sub->add_option("overrides", overrides, "positional section.key=value overrides");
    if (std::string(name) == "report")
      sub->add_option("--dir", report_dir, "summarise an existing run directory without a config");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    return run(stage, config_path, overrides, out_dir, report_dir);
  } catch (const lrdm::Error& e) {
    std::cerr << "lrdm " << stage << ": " << e.what() << "\n";
    return e.code() == lrdm::ErrorCode::ConfigInvalid ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "lrdm " << stage << ": " << e.what() << "\n";
    return kExitRuntime;
  }
}
