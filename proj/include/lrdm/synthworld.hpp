// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrdm/rng.hpp"
#include "lrdm/tensor.hpp"

namespace lrdm {

// Attribute order is also the block order of visual features.
enum class Attribute : int { Category = 0, Color = 1, Count = 2, Material = 3, Setting = 4 };
inline constexpr std::size_t kNumAttributes = 5;
inline constexpr std::array<Attribute, kNumAttributes> kAllAttributes = {
    Attribute::Category, Attribute::Color, Attribute::Count, Attribute::Material, Attribute::Setting};

std::string attribute_name(Attribute a);
std::optional<Attribute> attribute_from_name(const std::string& name);

using Tokens = std::vector<std::string>;

struct AttributeSchema {
  std::vector<std::string> categories;
  std::vector<std::string> colors;
  int min_count = 1;
  int max_count = 4;
  std::vector<std::string> materials;
  std::vector<std::string> settings;

  static AttributeSchema defaults();
  // Truncates each default list; used by small test worlds.
  static AttributeSchema sized(std::size_t categories, std::size_t colors, int max_count,
                               std::size_t materials, std::size_t settings);

  std::size_t cardinality(Attribute a) const;
  std::string value_word(Attribute a, std::size_t index) const;
  std::optional<std::size_t> value_index(Attribute a, const std::string& word) const;
  std::uint64_t combinations() const;
  std::size_t feature_dim() const;
  std::size_t block_offset(Attribute a) const;
  void validate() const;  // throws ConfigInvalid

  friend bool operator==(const AttributeSchema&, const AttributeSchema&) = default;
};

struct Item {
  int id = 0;
  std::array<std::size_t, kNumAttributes> values{};

  std::size_t value(Attribute a) const { return values[static_cast<int>(a)]; }
  std::size_t& value(Attribute a) { return values[static_cast<int>(a)]; }
  bool same_attributes(const Item& other) const { return values == other.values; }
};

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kPseudoToken = "*";

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kPseudo = 1;

  explicit Vocab(const AttributeSchema& schema);

  int id(const std::string& token) const;  // throws UnknownToken
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  std::vector<int> encode(const Tokens& tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct EditTuple {
  int ref_item_id = 0;
  Tokens source_caption;
  Tokens instruction;
  Tokens modified_caption;
  Tokens reverse_instruction;
  std::string edited_attribute;
  std::string old_value;
  std::string new_value;

  friend bool operator==(const EditTuple&, const EditTuple&) = default;
};

std::vector<Item> gen_items(const AttributeSchema& schema, std::size_t n, Rng& rng);
Item item_from_index(const AttributeSchema& schema, std::uint64_t index, int id);

Tokens render_caption(const AttributeSchema& schema, const Item& item);
// Inverse of render_caption. Returns nullopt for token sequences that are not captions.
std::optional<Item> parse_caption(const AttributeSchema& schema, const Tokens& caption, int id = 0);

EditTuple gen_edit_tuple(const AttributeSchema& schema, const Item& item, Rng& rng);
// Applies an instruction (forward or reverse) as an attribute rewrite.
// Returns nullopt when the instruction does not apply to the item.
std::optional<Item> apply_instruction(const AttributeSchema& schema, const Item& item, const Tokens& instruction);
Item edited_item(const AttributeSchema& schema, const Item& ref, const EditTuple& tuple);

Vector visual_feature(const AttributeSchema& schema, const Item& item, double noise_sigma, Rng& rng);

std::string join_tokens(const Tokens& tokens);
Tokens split_tokens(const std::string& text);

struct ImportResult {
  std::vector<EditTuple> tuples;
  std::size_t skipped = 0;
};

void export_tuples(const std::vector<EditTuple>& tuples, const std::filesystem::path& path);
ImportResult import_tuples(const std::filesystem::path& path);

struct GalleryEntry {
  int id = 0;  // index into the gallery
  Item item;
  Vector feature;
};

struct BenchmarkQuery {
  EditTuple tuple;
  Item reference;
  Vector ref_feature;
  std::vector<int> relevant;     // gallery entry ids
  std::vector<int> distractors;  // planted shortcut distractor entry ids
  std::vector<int> candidates;   // curated subset (size 6) for subset recall
};

struct RetrievalBenchmark {
  static constexpr int kVersion = 1;
  AttributeSchema schema;
  std::vector<BenchmarkQuery> queries;
  std::vector<GalleryEntry> gallery;
  bool multi_target = false;
  int replicas_per_item = 1;
  int shortcut_count = 0;
};

struct BenchmarkOptions {
  std::size_t gallery_size = 2000;  // distinct gallery items before replication
  int replicas_per_item = 1;
  int shortcut_count = 4;
  double noise_sigma = 0.1;
};

inline constexpr std::size_t kCandidateSetSize = 6;

RetrievalBenchmark build_benchmark(const AttributeSchema& schema, const std::vector<Item>& refs,
                                   const std::vector<EditTuple>& tuples, const BenchmarkOptions& options,
                                   Rng& rng);

nlohmann::json benchmark_to_json(const RetrievalBenchmark& bench);
RetrievalBenchmark benchmark_from_json(const nlohmann::json& doc);
void save_benchmark(const RetrievalBenchmark& bench, const std::filesystem::path& path,
                    const std::string& config_hash = "");
RetrievalBenchmark load_benchmark(const std::filesystem::path& path);

// Training split plus validation and test benchmarks over disjoint reference items.
struct WorldOptions {
  AttributeSchema schema = AttributeSchema::defaults();
  std::size_t train_tuples = 5000;
  std::size_t val_queries = 500;
  std::size_t val_gallery = 1000;
  std::size_t test_queries = 1000;
  BenchmarkOptions test;
};

struct World {
  AttributeSchema schema;
  std::vector<Item> train_items;
  std::vector<EditTuple> train_tuples;
  RetrievalBenchmark validation;
  RetrievalBenchmark test;
};

World build_world(const WorldOptions& options, Rng& rng);

}  // namespace lrdm
