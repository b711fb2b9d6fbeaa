// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace lrdm {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& why) {
  throw Error(ErrorCode::ConfigInvalid, key + " = '" + value + "': " + why);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(trim(part));
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t.empty() || t[0] == '-' || t[0] == '+') bad(key, v, "expected a non-negative integer");
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(t, &pos, 10);
  } catch (const std::exception&) {
    bad(key, v, "expected a non-negative integer");
  }
  if (pos != t.size()) bad(key, v, "expected a non-negative integer");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::size_t pos = 0;
  long out = 0;
  try {
    out = std::stol(t, &pos, 10);
  } catch (const std::exception&) {
    bad(key, v, "expected an integer");
  }
  if (pos != t.size() || out < -1000000 || out > 1000000) bad(key, v, "expected an integer");
  return static_cast<int>(out);
}

double parse_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(t, &pos);
  } catch (const std::exception&) {
    bad(key, v, "expected a number");
  }
  if (pos != t.size() || !std::isfinite(out)) bad(key, v, "expected a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  std::string t = trim(v);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad(key, v, "expected true or false");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

struct Field {
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field size_field(T ExperimentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<T>(parse_u64(k, v));
          }};
}

Field int_field(int ExperimentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*member = parse_int(k, v); }};
}

Field double_field(double ExperimentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return fmt_double(c.*member); },
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); }};
}

Field grid_field(std::vector<double> ExperimentConfig::*member) {
  return {[member](const ExperimentConfig& c) { return fmt_doubles(c.*member); },
          [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
            std::vector<double> out;
            for (const auto& p : split_list(v)) out.push_back(parse_double(k, p));
            c.*member = out;
          }};
}

// Nested members are addressed through small accessor lambdas.
template <typename Get>
Field nested_size(Get ref) {
  return {[ref](const ExperimentConfig& c) { return std::to_string(ref(const_cast<ExperimentConfig&>(c))); },
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) {
            ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(parse_u64(k, v));
          }};
}

template <typename Get>
Field nested_double(Get ref) {
  return {[ref](const ExperimentConfig& c) { return fmt_double(ref(const_cast<ExperimentConfig&>(c))); },
          [ref](ExperimentConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_double(k, v); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    using C = ExperimentConfig;
    t["world.categories"] = size_field(&C::categories);
    t["world.colors"] = size_field(&C::colors);
    t["world.max_count"] = int_field(&C::max_count);
    t["world.materials"] = size_field(&C::materials);
    t["world.settings"] = size_field(&C::settings);
    t["world.train_tuples"] = size_field(&C::train_tuples);
    t["world.val_queries"] = size_field(&C::val_queries);
    t["world.val_gallery"] = size_field(&C::val_gallery);
    t["world.test_queries"] = size_field(&C::test_queries);
    t["world.test_gallery"] = size_field(&C::test_gallery);
    t["world.replicas_per_item"] = int_field(&C::replicas_per_item);
    t["world.shortcut_count"] = int_field(&C::shortcut_count);
    t["world.noise_sigma"] = double_field(&C::noise_sigma);

    t["model.d_model"] = size_field(&C::d_model);
    t["model.n_blocks"] = size_field(&C::n_blocks);
    t["model.max_len"] = size_field(&C::max_len);
    t["model.rank"] = size_field(&C::rank);
    t["model.lora_alpha"] = double_field(&C::lora_alpha);

    t["pretrain.steps"] = nested_size([](C& c) -> std::size_t& { return c.pretrain.steps; });
    t["pretrain.batch_size"] = nested_size([](C& c) -> std::size_t& { return c.pretrain.batch_size; });
    t["pretrain.learning_rate"] = nested_double([](C& c) -> double& { return c.pretrain.learning_rate; });
    t["pretrain.holdout"] = nested_size([](C& c) -> std::size_t& { return c.pretrain.holdout; });

    t["train.steps"] = nested_size([](C& c) -> std::size_t& { return c.train.steps; });
    t["train.batch_size"] = nested_size([](C& c) -> std::size_t& { return c.train.batch_size; });
    t["train.learning_rate"] = nested_double([](C& c) -> double& { return c.train.learning_rate; });
    t["train.weight_decay"] = nested_double([](C& c) -> double& { return c.train.weight_decay; });
    t["train.warmup_steps"] = nested_size([](C& c) -> std::size_t& { return c.train.warmup_steps; });
    t["train.lambda_trans"] = nested_double([](C& c) -> double& { return c.train.lambda_trans; });
    t["train.omega"] = nested_double([](C& c) -> double& { return c.train.omega; });
    t["train.transition_uses_pre_step_weights"] = {
        [](const C& c) { return std::string(c.train.transition_uses_pre_step_weights ? "true" : "false"); },
        [](C& c, const std::string& k, const std::string& v) {
          c.train.transition_uses_pre_step_weights = parse_bool(k, v);
        }};
    t["train.modes"] = {[](const C& c) {
                          std::string out;
                          for (std::size_t i = 0; i < c.train_modes.size(); ++i)
                            out += (i ? "," : "") + mode_name(c.train_modes[i]);
                          return out;
                        },
                        [](C& c, const std::string& k, const std::string& v) {
                          std::vector<TrainMode> modes;
                          for (const auto& p : split_list(v)) {
                            const auto m = mode_from_name(p);
                            if (!m) bad(k, v, "unknown mode '" + p + "'");
                            if (std::find(modes.begin(), modes.end(), *m) == modes.end()) modes.push_back(*m);
                          }
                          c.train_modes = modes;
                        }};

    t["probe.batches"] = nested_size([](C& c) -> std::size_t& { return c.probe.batches; });
    t["probe.batch_size"] = nested_size([](C& c) -> std::size_t& { return c.probe.batch_size; });
    t["probe.seeds"] = size_field(&C::probe_seeds);

    t["merge.rules"] = {[](const C& c) {
                          std::string out;
                          for (std::size_t i = 0; i < c.merge_rules.size(); ++i)
                            out += (i ? "," : "") + rule_name(c.merge_rules[i]);
                          return out;
                        },
                        [](C& c, const std::string& k, const std::string& v) {
                          std::vector<MergeRule> rules;
                          for (const auto& p : split_list(v)) {
                            const auto r = rule_from_name(p);
                            if (!r) bad(k, v, "unknown merge rule '" + p + "'");
                            if (std::find(rules.begin(), rules.end(), *r) == rules.end()) rules.push_back(*r);
                          }
                          c.merge_rules = rules;
                        }};
    t["merge.alpha"] = nested_double([](C& c) -> double& { return c.merge.alpha; });
    t["merge.ties_density"] = nested_double([](C& c) -> double& { return c.merge.ties_density; });
    t["merge.dare_drop_p"] = nested_double([](C& c) -> double& { return c.merge.dare_drop_p; });

    t["sweep.alpha_grid"] = grid_field(&C::alpha_grid);
    t["sweep.omega_grid"] = grid_field(&C::omega_grid);
    t["sweep.lambda_grid"] = grid_field(&C::lambda_grid);

    t["ablate.seeds"] = size_field(&C::ablate_seeds);
    t["eval.max_queries"] = size_field(&C::eval_max_queries);

    t["run.output_dir"] = {[](const C& c) { return c.output_dir; },
                           [](C& c, const std::string&, const std::string& v) { c.output_dir = trim(v); }};
    t["run.seed"] = size_field(&C::seed);
    return t;
  }();
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  world_options().schema.validate();
  if (train_tuples < 2) throw Error(ErrorCode::ConfigInvalid, "world.train_tuples must be >= 2");
  if (val_queries < 1 || test_queries < 1) throw Error(ErrorCode::ConfigInvalid, "benchmarks need queries");
  if (val_gallery < val_queries || test_gallery < test_queries)
    throw Error(ErrorCode::ConfigInvalid, "gallery size must be >= query count");
  if (replicas_per_item < 1) throw Error(ErrorCode::ConfigInvalid, "world.replicas_per_item must be >= 1");
  if (shortcut_count < 0) throw Error(ErrorCode::ConfigInvalid, "world.shortcut_count must be >= 0");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "world.noise_sigma must be >= 0");
  encoder_config().validate();
  adapter_config().validate();
  pretrain.validate();
  train.validate();
  if (train.batch_size > train_tuples) throw Error(ErrorCode::ConfigInvalid, "train.batch_size exceeds tuple count");
  if (train_modes.empty()) throw Error(ErrorCode::ConfigInvalid, "train.modes is empty");
  probe.validate();
  if (probe_seeds < 2) throw Error(ErrorCode::ConfigInvalid, "probe.seeds must be >= 2");
  merge.validate();
  for (double a : alpha_grid)
    if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "sweep.alpha_grid values must lie in [0, 1]");
  if (alpha_grid.empty()) throw Error(ErrorCode::ConfigInvalid, "sweep.alpha_grid is empty");
  for (double w : omega_grid)
    if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "sweep.omega_grid values must lie in [0, 1]");
  for (double l : lambda_grid)
    if (!(l >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "sweep.lambda_grid values must be >= 0");
  if (ablate_seeds < 1) throw Error(ErrorCode::ConfigInvalid, "ablate.seeds must be >= 1");
  if (output_dir.empty()) throw Error(ErrorCode::ConfigInvalid, "run.output_dir is empty");
}

WorldOptions ExperimentConfig::world_options() const {
  WorldOptions w;
  w.schema = AttributeSchema::sized(categories, colors, max_count, materials, settings);
  w.train_tuples = train_tuples;
  w.val_queries = val_queries;
  w.val_gallery = val_gallery;
  w.test_queries = test_queries;
  w.test.gallery_size = test_gallery;
  w.test.replicas_per_item = replicas_per_item;
  w.test.shortcut_count = shortcut_count;
  w.test.noise_sigma = noise_sigma;
  return w;
}

EncoderConfig ExperimentConfig::encoder_config() const {
  const AttributeSchema schema = AttributeSchema::sized(categories, colors, max_count, materials, settings);
  EncoderConfig e;
  e.d_model = d_model;
  e.n_blocks = n_blocks;
  e.max_len = max_len;
  e.d_visual_in = schema.feature_dim();
  e.vocab_size = Vocab(schema).size();
  return e;
}

AdapterConfig ExperimentConfig::adapter_config() const {
  AdapterConfig a;
  a.rank = rank;
  a.lora_alpha = lora_alpha;
  return a;
}

std::uint64_t ExperimentConfig::derived_seed(const std::string& label, std::uint64_t index) const {
  return Rng(seed).split(label).split(index).next_u64();
}

std::pair<std::string, std::string> split_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorCode::ConfigInvalid, "override '" + text + "' is not section.key=value");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

void apply_override(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) throw Error(ErrorCode::ConfigInvalid, "unknown config key '" + key + "'");
  it->second.set(config, key, value);
}

ExperimentConfig load_config(const std::filesystem::path& path) { return load_config(path, {}); }

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  ExperimentConfig config;
  if (!path.empty()) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::ConfigInvalid, "config file not found: " + path.string());
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw Error(ErrorCode::ConfigInvalid, e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw Error(ErrorCode::ConfigInvalid, "key '" + section + "' is outside any section");
      for (const auto& [key, value] : body) apply_override(config, section + "." + key, value.data());
    }
  }
  for (const std::string& o : overrides) {
    const auto [k, v] = split_override(o);
    apply_override(config, k, v);
  }
  config.validate();
  return config;
}

std::string canonical_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) {
    if (name == "run.output_dir") continue;
    out += name + "=" + field.get(config) + "\n";
  }
  return out;
}

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(canonical_config(config)).substr(0, 16); }

std::string config_to_ini(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.find('.');
    const std::string s = name.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + s + "]\n";
      section = s;
    }
    out += name.substr(dot + 1) + " = " + field.get(config) + "\n";
  }
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::Io, "SHA-256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::MissingArtifact, path.filename().string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace lrdm
