// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/synthworld.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

namespace lrdm {

namespace {

const std::vector<std::string> kDefaultCategories = {"bird", "dog",  "cat",      "horse",  "car",  "boat",
                                                     "chair", "lamp", "umbrella", "bottle", "kite", "clock"};
const std::vector<std::string> kDefaultColors = {"red", "blue", "green", "yellow", "black", "white", "orange", "purple"};
const std::vector<std::string> kDefaultMaterials = {"wooden", "metal", "plastic", "glass", "stone", "paper"};
const std::vector<std::string> kDefaultSettings = {"park",   "beach",  "kitchen", "street",
                                                   "forest", "garden", "office",  "field"};
const std::vector<std::string> kTemplateWords = {"a",      "photo", "of", "in", "the", "and",
                                                 "change", "from",  "to", "make", "it"};

std::uint64_t item_key(const Item& item) {
  std::uint64_t key = 0;
  for (std::size_t v : item.values) key = key * 64 + v;
  return key;
}

}  // namespace

std::string attribute_name(Attribute a) {
  switch (a) {
    case Attribute::Category: return "category";
    case Attribute::Color: return "color";
    case Attribute::Count: return "count";
    case Attribute::Material: return "material";
    case Attribute::Setting: return "setting";
  }
  return "";
}

std::optional<Attribute> attribute_from_name(const std::string& name) {
  for (Attribute a : kAllAttributes)
    if (attribute_name(a) == name) return a;
  return std::nullopt;
}

AttributeSchema AttributeSchema::defaults() {
  AttributeSchema s;
  s.categories = kDefaultCategories;
  s.colors = kDefaultColors;
  s.materials = kDefaultMaterials;
  s.settings = kDefaultSettings;
  return s;
}

AttributeSchema AttributeSchema::sized(std::size_t categories, std::size_t colors, int max_count,
                                       std::size_t materials, std::size_t settings) {
  auto take = [](const std::vector<std::string>& src, std::size_t n) {
    if (n == 0 || n > src.size()) throw Error(ErrorCode::ConfigInvalid, "schema list size out of range");
    return std::vector<std::string>(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(n));
  };
  AttributeSchema s;
  s.categories = take(kDefaultCategories, categories);
  s.colors = take(kDefaultColors, colors);
  s.materials = take(kDefaultMaterials, materials);
  s.settings = take(kDefaultSettings, settings);
  s.max_count = max_count;
  s.validate();
  return s;
}

std::size_t AttributeSchema::cardinality(Attribute a) const {
  switch (a) {
    case Attribute::Category: return categories.size();
    case Attribute::Color: return colors.size();
    case Attribute::Count: return static_cast<std::size_t>(max_count - min_count + 1);
    case Attribute::Material: return materials.size();
    case Attribute::Setting: return settings.size();
  }
  return 0;
}

std::string AttributeSchema::value_word(Attribute a, std::size_t index) const {
  switch (a) {
    case Attribute::Category: return categories.at(index);
    case Attribute::Color: return colors.at(index);
    case Attribute::Count: return std::to_string(min_count + static_cast<int>(index));
    case Attribute::Material: return materials.at(index);
    case Attribute::Setting: return settings.at(index);
  }
  return "";
}

std::optional<std::size_t> AttributeSchema::value_index(Attribute a, const std::string& word) const {
  for (std::size_t i = 0; i < cardinality(a); ++i)
    if (value_word(a, i) == word) return i;
  return std::nullopt;
}

std::uint64_t AttributeSchema::combinations() const {
  std::uint64_t n = 1;
  for (Attribute a : kAllAttributes) n *= cardinality(a);
  return n;
}

std::size_t AttributeSchema::feature_dim() const {
  std::size_t d = 0;
  for (Attribute a : kAllAttributes) d += cardinality(a);
  return d;
}

std::size_t AttributeSchema::block_offset(Attribute a) const {
  std::size_t off = 0;
  for (Attribute b : kAllAttributes) {
    if (b == a) return off;
    off += cardinality(b);
  }
  return off;
}

void AttributeSchema::validate() const {
  if (min_count < 1 || max_count < min_count || max_count > 9) {
    throw Error(ErrorCode::ConfigInvalid, "count range must lie within 1..9");
  }
  std::set<std::string> seen(kTemplateWords.begin(), kTemplateWords.end());
  for (Attribute a : kAllAttributes) seen.insert(attribute_name(a));
  for (Attribute a : kAllAttributes) {
    if (cardinality(a) == 0) throw Error(ErrorCode::ConfigInvalid, attribute_name(a) + " list is empty");
    for (std::size_t i = 0; i < cardinality(a); ++i) {
      const std::string w = value_word(a, i);
      if (w.empty() || w.find(' ') != std::string::npos || !seen.insert(w).second) {
        throw Error(ErrorCode::ConfigInvalid, "attribute word '" + w + "' is empty, spaced or duplicated");
      }
    }
  }
}

Vocab::Vocab(const AttributeSchema& schema) {
  schema.validate();
  auto add = [this](const std::string& t) {
    if (ids_.emplace(t, static_cast<int>(tokens_.size())).second) tokens_.push_back(t);
  };
  add(kPadToken);
  add(kPseudoToken);
  for (const auto& w : kTemplateWords) add(w);
  for (Attribute a : kAllAttributes) add(attribute_name(a));
  for (Attribute a : kAllAttributes)
    for (std::size_t i = 0; i < schema.cardinality(a); ++i) add(schema.value_word(a, i));
}

int Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw Error(ErrorCode::UnknownToken, "'" + token + "'");
  return it->second;
}

std::vector<int> Vocab::encode(const Tokens& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Item item_from_index(const AttributeSchema& schema, std::uint64_t index, int id) {
  Item item;
  item.id = id;
  for (std::size_t k = kNumAttributes; k-- > 0;) {
    const std::size_t card = schema.cardinality(kAllAttributes[k]);
    item.values[k] = static_cast<std::size_t>(index % card);
    index /= card;
  }
  return item;
}

std::vector<Item> gen_items(const AttributeSchema& schema, std::size_t n, Rng& rng) {
  schema.validate();
  const std::uint64_t total = schema.combinations();
  if (n == 0) throw Error(ErrorCode::ConfigInvalid, "gen_items needs n >= 1");
  if (n > total) {
    throw Error(ErrorCode::WorldTooSmall,
                "requested " + std::to_string(n) + " items, schema has " + std::to_string(total) + " combinations");
  }
  // Sparse Fisher-Yates over the combination index space.
  std::unordered_map<std::uint64_t, std::uint64_t> swapped;
  auto at = [&](std::uint64_t i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<Item> items;
  items.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t j = i + rng.uniform_int(total - i);
    const std::uint64_t vi = at(i);
    const std::uint64_t vj = at(j);
    swapped[j] = vi;
    swapped[i] = vj;
    items.push_back(item_from_index(schema, vj, static_cast<int>(i)));
  }
  return items;
}

Tokens render_caption(const AttributeSchema& schema, const Item& item) {
  return {"a",
          "photo",
          "of",
          schema.value_word(Attribute::Count, item.value(Attribute::Count)),
          schema.value_word(Attribute::Color, item.value(Attribute::Color)),
          schema.value_word(Attribute::Material, item.value(Attribute::Material)),
          schema.value_word(Attribute::Category, item.value(Attribute::Category)),
          "in",
          "the",
          schema.value_word(Attribute::Setting, item.value(Attribute::Setting))};
}

std::optional<Item> parse_caption(const AttributeSchema& schema, const Tokens& c, int id) {
  if (c.size() != 10 || c[0] != "a" || c[1] != "photo" || c[2] != "of" || c[7] != "in" || c[8] != "the") {
    return std::nullopt;
  }
  const std::array<std::pair<Attribute, std::size_t>, kNumAttributes> slots = {
      {{Attribute::Count, 3}, {Attribute::Color, 4}, {Attribute::Material, 5}, {Attribute::Category, 6},
       {Attribute::Setting, 9}}};
  Item item;
  item.id = id;
  for (auto [attr, pos] : slots) {
    auto v = schema.value_index(attr, c[pos]);
    if (!v) return std::nullopt;
    item.value(attr) = *v;
  }
  return item;
}

namespace {

Tokens change_instruction(Attribute attr, const std::string& from, const std::string& to) {
  return {"change", "the", attribute_name(attr), "from", from, "to", to};
}

Tokens count_instruction(const std::string& count, const std::string& category) {
  return {"make", "it", count, category};
}

}  // namespace

EditTuple gen_edit_tuple(const AttributeSchema& schema, const Item& item, Rng& rng) {
  std::vector<Attribute> editable;
  for (Attribute a : kAllAttributes)
    if (schema.cardinality(a) >= 2) editable.push_back(a);
  if (editable.empty()) throw Error(ErrorCode::WorldTooSmall, "no attribute has two or more values");

  const Attribute attr = editable[rng.uniform_int(editable.size())];
  const std::size_t old_index = item.value(attr);
  std::size_t new_index = rng.uniform_int(schema.cardinality(attr) - 1);
  if (new_index >= old_index) ++new_index;

  Item target = item;
  target.value(attr) = new_index;

  EditTuple t;
  t.ref_item_id = item.id;
  t.source_caption = render_caption(schema, item);
  t.modified_caption = render_caption(schema, target);
  t.edited_attribute = attribute_name(attr);
  t.old_value = schema.value_word(attr, old_index);
  t.new_value = schema.value_word(attr, new_index);
  if (attr == Attribute::Count) {
    const std::string category = schema.value_word(Attribute::Category, item.value(Attribute::Category));
    t.instruction = count_instruction(t.new_value, category);
    t.reverse_instruction = count_instruction(t.old_value, category);
  } else {
    t.instruction = change_instruction(attr, t.old_value, t.new_value);
    t.reverse_instruction = change_instruction(attr, t.new_value, t.old_value);
  }
  return t;
}

std::optional<Item> apply_instruction(const AttributeSchema& schema, const Item& item, const Tokens& ins) {
  Item out = item;
  if (ins.size() == 4 && ins[0] == "make" && ins[1] == "it") {
    auto count = schema.value_index(Attribute::Count, ins[2]);
    auto category = schema.value_index(Attribute::Category, ins[3]);
    if (!count || !category || *category != item.value(Attribute::Category)) return std::nullopt;
    out.value(Attribute::Count) = *count;
    return out;
  }
  if (ins.size() == 7 && ins[0] == "change" && ins[1] == "the" && ins[3] == "from" && ins[5] == "to") {
    auto attr = attribute_from_name(ins[2]);
    if (!attr) return std::nullopt;
    auto from = schema.value_index(*attr, ins[4]);
    auto to = schema.value_index(*attr, ins[6]);
    if (!from || !to || *from != item.value(*attr)) return std::nullopt;
    out.value(*attr) = *to;
    return out;
  }
  return std::nullopt;
}

Item edited_item(const AttributeSchema& schema, const Item& ref, const EditTuple& tuple) {
  auto out = apply_instruction(schema, ref, tuple.instruction);
  if (!out) throw Error(ErrorCode::MalformedRecord, "instruction does not apply to its reference item");
  return *out;
}

Vector visual_feature(const AttributeSchema& schema, const Item& item, double noise_sigma, Rng& rng) {
  Vector f(schema.feature_dim(), 0.0);
  for (Attribute a : kAllAttributes) f[schema.block_offset(a) + item.value(a)] = 1.0;
  if (noise_sigma > 0.0)
    for (double& x : f) x += noise_sigma * rng.gaussian();
  return f;
}

std::string join_tokens(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens split_tokens(const std::string& text) {
  Tokens out;
  std::istringstream in(text);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines tuple files

namespace {

const std::array<const char*, 8> kTupleFields = {"instruction",     "modified_caption", "reverse_instruction",
                                                 "source_caption",  "edited_attribute", "old_value",
                                                 "new_value",       "ref_item_id"};

nlohmann::ordered_json tuple_to_json(const EditTuple& t) {
  nlohmann::ordered_json j;
  j["instruction"] = join_tokens(t.instruction);
  j["modified_caption"] = join_tokens(t.modified_caption);
  j["reverse_instruction"] = join_tokens(t.reverse_instruction);
  j["source_caption"] = join_tokens(t.source_caption);
  j["edited_attribute"] = t.edited_attribute;
  j["old_value"] = t.old_value;
  j["new_value"] = t.new_value;
  j["ref_item_id"] = t.ref_item_id;
  return j;
}

}  // namespace

void export_tuples(const std::vector<EditTuple>& tuples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& t : tuples) out << tuple_to_json(t).dump() << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

ImportResult import_tuples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  ImportResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object()) {
      throw Error(ErrorCode::MalformedRecord, path.string() + ":" + std::to_string(line_no) + ": not an object");
    }
    const bool complete = std::all_of(kTupleFields.begin(), kTupleFields.end(), [&](const char* k) {
      if (!j.contains(k)) return false;
      return std::string_view(k) == "ref_item_id" ? j[k].is_number_integer() : j[k].is_string();
    });
    if (!complete) {
      ++result.skipped;
      continue;
    }
    EditTuple t;
    t.instruction = split_tokens(j["instruction"].get<std::string>());
    t.modified_caption = split_tokens(j["modified_caption"].get<std::string>());
    t.reverse_instruction = split_tokens(j["reverse_instruction"].get<std::string>());
    t.source_caption = split_tokens(j["source_caption"].get<std::string>());
    t.edited_attribute = j["edited_attribute"].get<std::string>();
    t.old_value = j["old_value"].get<std::string>();
    t.new_value = j["new_value"].get<std::string>();
    t.ref_item_id = j["ref_item_id"].get<int>();
    result.tuples.push_back(std::move(t));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Benchmark construction

namespace {

std::size_t shared_attributes(const Item& a, const Item& b) {
  std::size_t n = 0;
  for (std::size_t k = 0; k < kNumAttributes; ++k) n += a.values[k] == b.values[k];
  return n;
}

}  // namespace

RetrievalBenchmark build_benchmark(const AttributeSchema& schema, const std::vector<Item>& refs,
                                   const std::vector<EditTuple>& tuples, const BenchmarkOptions& options,
                                   Rng& rng) {
  if (options.gallery_size < tuples.size()) {
    throw Error(ErrorCode::ConfigInvalid, "gallery_size must be at least the number of queries");
  }
  if (options.shortcut_count < 0 || options.replicas_per_item < 1) {
    throw Error(ErrorCode::ConfigInvalid, "shortcut_count >= 0 and replicas_per_item >= 1 required");
  }
  if (options.gallery_size > schema.combinations()) {
    throw Error(ErrorCode::WorldTooSmall, "gallery_size exceeds distinct attribute combinations");
  }
  std::unordered_map<int, const Item*> ref_by_id;
  for (const auto& it : refs) ref_by_id[it.id] = &it;

  Rng plant_rng = rng.split("plant");
  Rng fill_rng = rng.split("fill");
  Rng noise_rng = rng.split("noise");

  std::vector<Item> distinct;
  std::unordered_map<std::uint64_t, std::size_t> index_of;
  auto insert = [&](Item item) -> std::size_t {
    auto [pos, fresh] = index_of.emplace(item_key(item), distinct.size());
    if (fresh) {
      item.id = static_cast<int>(distinct.size());
      distinct.push_back(item);
    }
    return pos->second;
  };

  std::vector<Item> references;
  std::vector<std::size_t> target_slot;
  std::vector<Attribute> edited;
  for (const auto& t : tuples) {
    auto it = ref_by_id.find(t.ref_item_id);
    if (it == ref_by_id.end()) {
      throw Error(ErrorCode::MalformedRecord, "tuple references unknown item " + std::to_string(t.ref_item_id));
    }
    references.push_back(*it->second);
    edited.push_back(*attribute_from_name(t.edited_attribute));
    target_slot.push_back(insert(edited_item(schema, *it->second, t)));
  }

  // Plant one-attribute-away neighbours of each target (round robin over
  // queries) while the gallery has room.
  for (int round = 0; round < options.shortcut_count; ++round) {
    for (std::size_t q = 0; q < tuples.size() && distinct.size() < options.gallery_size; ++q) {
      std::vector<Attribute> preserved;
      for (Attribute a : kAllAttributes)
        if (a != edited[q] && schema.cardinality(a) >= 2) preserved.push_back(a);
      if (preserved.empty()) continue;
      Item mutant = distinct[target_slot[q]];
      const Attribute a = preserved[plant_rng.uniform_int(preserved.size())];
      std::size_t v = plant_rng.uniform_int(schema.cardinality(a) - 1);
      if (v >= mutant.value(a)) ++v;
      mutant.value(a) = v;
      insert(mutant);
    }
  }
  while (distinct.size() < options.gallery_size) {
    insert(item_from_index(schema, fill_rng.uniform_int(schema.combinations()), 0));
  }

  RetrievalBenchmark bench;
  bench.schema = schema;
  bench.multi_target = options.replicas_per_item > 1;
  bench.replicas_per_item = options.replicas_per_item;
  bench.shortcut_count = options.shortcut_count;
  const int reps = options.replicas_per_item;
  for (const auto& item : distinct) {
    for (int r = 0; r < reps; ++r) {
      GalleryEntry e;
      e.id = static_cast<int>(bench.gallery.size());
      e.item = item;
      e.feature = visual_feature(schema, item, options.noise_sigma, noise_rng);
      bench.gallery.push_back(std::move(e));
    }
  }
  auto entries_of = [reps](std::size_t slot) {
    std::vector<int> ids;
    for (int r = 0; r < reps; ++r) ids.push_back(static_cast<int>(slot) * reps + r);
    return ids;
  };

  for (std::size_t q = 0; q < tuples.size(); ++q) {
    const Item& target = distinct[target_slot[q]];
    const Attribute a = edited[q];

    // Rank every non-target item by closeness to the target (ties by slot).
    std::vector<std::pair<std::size_t, std::size_t>> shortcut;  // (shared attrs, slot)
    std::vector<std::pair<std::size_t, std::size_t>> others;
    for (std::size_t s = 0; s < distinct.size(); ++s) {
      if (s == target_slot[q]) continue;
      const std::size_t shared = shared_attributes(distinct[s], target);
      if (distinct[s].value(a) == target.value(a)) {
        shortcut.emplace_back(shared, s);
      } else {
        others.emplace_back(shared, s);
      }
    }
    auto closest_first = [](const auto& x, const auto& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    };
    std::sort(shortcut.begin(), shortcut.end(), closest_first);
    std::sort(others.begin(), others.end(), closest_first);

    const auto needed = static_cast<std::size_t>(options.shortcut_count);
    if (shortcut.size() < needed) {
      throw Error(ErrorCode::InsufficientDistractors,
                  "query " + std::to_string(q) + " has " + std::to_string(shortcut.size()) + " valid distractors, " +
                      std::to_string(needed) + " requested");
    }

    BenchmarkQuery bq;
    bq.tuple = tuples[q];
    bq.reference = references[q];
    bq.ref_feature = visual_feature(schema, references[q], options.noise_sigma, noise_rng);
    bq.relevant = entries_of(target_slot[q]);
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < needed; ++i) {
      for (int id : entries_of(shortcut[i].second)) bq.distractors.push_back(id);
      negatives.push_back(shortcut[i].second);
    }
    // Fill the curated subset with the closest remaining items.
    std::vector<std::pair<std::size_t, std::size_t>> rest(shortcut.begin() + static_cast<std::ptrdiff_t>(needed),
                                                          shortcut.end());
    rest.insert(rest.end(), others.begin(), others.end());
    std::sort(rest.begin(), rest.end(), closest_first);
    for (std::size_t i = 0; negatives.size() < kCandidateSetSize - 1 && i < rest.size(); ++i) {
      negatives.push_back(rest[i].second);
    }
    negatives.resize(std::min(negatives.size(), kCandidateSetSize - 1));
    bq.candidates.push_back(bq.relevant.front());
    for (std::size_t s : negatives) bq.candidates.push_back(static_cast<int>(s) * reps);
    bench.queries.push_back(std::move(bq));
  }
  return bench;
}

// ---------------------------------------------------------------------------
// Benchmark JSON

namespace {

nlohmann::json item_to_json(const AttributeSchema& schema, const Item& item) {
  nlohmann::json j;
  j["id"] = item.id;
  for (Attribute a : kAllAttributes) j[attribute_name(a)] = schema.value_word(a, item.value(a));
  return j;
}

Item item_from_json(const AttributeSchema& schema, const nlohmann::json& j) {
  Item item;
  item.id = j.at("id").get<int>();
  for (Attribute a : kAllAttributes) {
    auto v = schema.value_index(a, j.at(attribute_name(a)).get<std::string>());
    if (!v) throw Error(ErrorCode::MalformedRecord, "unknown " + attribute_name(a) + " value");
    item.value(a) = *v;
  }
  return item;
}

}  // namespace

nlohmann::json benchmark_to_json(const RetrievalBenchmark& bench) {
  nlohmann::json doc;
  doc["benchmark_version"] = RetrievalBenchmark::kVersion;
  doc["schema"] = {{"categories", bench.schema.categories},
                   {"colors", bench.schema.colors},
                   {"min_count", bench.schema.min_count},
                   {"max_count", bench.schema.max_count},
                   {"materials", bench.schema.materials},
                   {"settings", bench.schema.settings}};
  doc["multi_target"] = bench.multi_target;
  doc["replicas_per_item"] = bench.replicas_per_item;
  doc["shortcut_count"] = bench.shortcut_count;
  auto& gallery = doc["gallery"] = nlohmann::json::array();
  for (const auto& e : bench.gallery) {
    gallery.push_back({{"id", e.id}, {"item", item_to_json(bench.schema, e.item)}, {"feature", e.feature}});
  }
  auto& queries = doc["queries"] = nlohmann::json::array();
  for (const auto& q : bench.queries) {
    queries.push_back({{"tuple", tuple_to_json(q.tuple)},
                       {"reference", item_to_json(bench.schema, q.reference)},
                       {"ref_feature", q.ref_feature},
                       {"relevant", q.relevant},
                       {"distractors", q.distractors},
                       {"candidates", q.candidates}});
  }
  return doc;
}

RetrievalBenchmark benchmark_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("benchmark_version").get<int>();
    if (version != RetrievalBenchmark::kVersion) {
      throw Error(ErrorCode::UnsupportedVersion, "benchmark_version " + std::to_string(version));
    }
    RetrievalBenchmark bench;
    const auto& s = doc.at("schema");
    bench.schema.categories = s.at("categories").get<std::vector<std::string>>();
    bench.schema.colors = s.at("colors").get<std::vector<std::string>>();
    bench.schema.min_count = s.at("min_count").get<int>();
    bench.schema.max_count = s.at("max_count").get<int>();
    bench.schema.materials = s.at("materials").get<std::vector<std::string>>();
    bench.schema.settings = s.at("settings").get<std::vector<std::string>>();
    bench.schema.validate();
    bench.multi_target = doc.at("multi_target").get<bool>();
    bench.replicas_per_item = doc.at("replicas_per_item").get<int>();
    bench.shortcut_count = doc.at("shortcut_count").get<int>();
    for (const auto& g : doc.at("gallery")) {
      GalleryEntry e;
      e.id = g.at("id").get<int>();
      e.item = item_from_json(bench.schema, g.at("item"));
      e.feature = g.at("feature").get<Vector>();
      bench.gallery.push_back(std::move(e));
    }
    for (const auto& qj : doc.at("queries")) {
      BenchmarkQuery q;
      const auto& t = qj.at("tuple");
      q.tuple.instruction = split_tokens(t.at("instruction").get<std::string>());
      q.tuple.modified_caption = split_tokens(t.at("modified_caption").get<std::string>());
      q.tuple.reverse_instruction = split_tokens(t.at("reverse_instruction").get<std::string>());
      q.tuple.source_caption = split_tokens(t.at("source_caption").get<std::string>());
      q.tuple.edited_attribute = t.at("edited_attribute").get<std::string>();
      q.tuple.old_value = t.at("old_value").get<std::string>();
      q.tuple.new_value = t.at("new_value").get<std::string>();
      q.tuple.ref_item_id = t.at("ref_item_id").get<int>();
      q.reference = item_from_json(bench.schema, qj.at("reference"));
      q.ref_feature = qj.at("ref_feature").get<Vector>();
      q.relevant = qj.at("relevant").get<std::vector<int>>();
      q.distractors = qj.at("distractors").get<std::vector<int>>();
      q.candidates = qj.at("candidates").get<std::vector<int>>();
      bench.queries.push_back(std::move(q));
    }
    return bench;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("benchmark document: ") + e.what());
  }
}

void save_benchmark(const RetrievalBenchmark& bench, const std::filesystem::path& path,
                    const std::string& config_hash) {
  nlohmann::json doc = benchmark_to_json(bench);
  if (!config_hash.empty()) doc["config_hash"] = config_hash;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << doc.dump() << '\n';
}

RetrievalBenchmark load_benchmark(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedRecord, path.string() + ": " + e.what());
  }
  return benchmark_from_json(doc);
}

// ---------------------------------------------------------------------------

World build_world(const WorldOptions& options, Rng& rng) {
  options.schema.validate();
  const std::size_t n_refs = options.train_tuples + options.val_queries + options.test_queries;
  Rng item_rng = rng.split("items");
  Rng edit_rng = rng.split("edits");
  std::vector<Item> refs = gen_items(options.schema, n_refs, item_rng);

  World world;
  world.schema = options.schema;
  std::vector<Item> val_refs, test_refs;
  std::vector<EditTuple> val_tuples, test_tuples;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    EditTuple t = gen_edit_tuple(options.schema, refs[i], edit_rng);
    if (i < options.train_tuples) {
      world.train_items.push_back(refs[i]);
      world.train_tuples.push_back(std::move(t));
    } else if (i < options.train_tuples + options.val_queries) {
      val_refs.push_back(refs[i]);
      val_tuples.push_back(std::move(t));
    } else {
      test_refs.push_back(refs[i]);
      test_tuples.push_back(std::move(t));
    }
  }
  BenchmarkOptions val_opts = options.test;
  val_opts.gallery_size = options.val_gallery;
  Rng val_rng = rng.split("validation");
  Rng test_rng = rng.split("test");
  world.validation = build_benchmark(options.schema, val_refs, val_tuples, val_opts, val_rng);
  world.test = build_benchmark(options.schema, test_refs, test_tuples, options.test, test_rng);
  return world;
}

}  // namespace lrdm
