// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "lrdm/synthworld.hpp"

using namespace lrdm;

namespace {

Item make_item(const AttributeSchema& s, const std::string& count, const std::string& color, const std::string& material,
               const std::string& category, const std::string& setting) {
  Item it;
  it.value(Attribute::Count) = *s.value_index(Attribute::Count, count);
  it.value(Attribute::Color) = *s.value_index(Attribute::Color, color);
  it.value(Attribute::Material) = *s.value_index(Attribute::Material, material);
  it.value(Attribute::Category) = *s.value_index(Attribute::Category, category);
  it.value(Attribute::Setting) = *s.value_index(Attribute::Setting, setting);
  return it;
}

// Draws edits until one matches the requested attribute and new value.
EditTuple find_edit(const AttributeSchema& s, const Item& item, const std::string& attr, const std::string& new_value) {
  for (std::uint64_t seed = 0; seed < 100000; ++seed) {
    Rng rng(seed);
    EditTuple t = gen_edit_tuple(s, item, rng);
    if (t.edited_attribute == attr && t.new_value == new_value) return t;
  }
  FAIL("no matching edit");
  return {};
}

}  // namespace

TEST_CASE("gen_items") {
  const AttributeSchema s = AttributeSchema::defaults();
  Rng a(9), b(9);
  const auto one = gen_items(s, 1, a);
  CHECK(one.size() == 1);
  CHECK(one[0].same_attributes(gen_items(s, 1, b)[0]));

  const std::uint64_t all = 12ull * 8 * 4 * 6 * 8;
  CHECK(s.combinations() == all);
  Rng c(3);
  const auto items = gen_items(s, all, c);
  std::set<std::array<std::size_t, kNumAttributes>> distinct;
  for (const auto& it : items) distinct.insert(it.values);
  CHECK(distinct.size() == all);

  Rng d(3);
  CHECK_THROWS_AS(gen_items(s, all + 1, d), Error);
}

TEST_CASE("render_caption") {
  const AttributeSchema s = AttributeSchema::defaults();
  const Item bird = make_item(s, "1", "green", "wooden", "bird", "park");
  CHECK(join_tokens(render_caption(s, bird)) == "a photo of 1 green wooden bird in the park");
  CHECK(render_caption(s, bird) == render_caption(s, bird));
  Item other = bird;
  other.value(Attribute::Setting) = 1;
  const Tokens x = render_caption(s, bird), y = render_caption(s, other);
  REQUIRE(x.size() == y.size());
  int diff = 0;
  for (std::size_t i = 0; i < x.size(); ++i) diff += x[i] != y[i];
  CHECK(diff == 1);
  CHECK(parse_caption(s, x, 5)->same_attributes(bird));
  CHECK_FALSE(parse_caption(s, split_tokens("a photo of nothing")).has_value());
}

TEST_CASE("edit tuples") {
  const AttributeSchema s = AttributeSchema::defaults();
  const Item umbrella = make_item(s, "1", "red", "metal", "umbrella", "street");
  const EditTuple color = find_edit(s, umbrella, "color", "blue");
  CHECK(join_tokens(color.instruction) == "change the color from red to blue");
  CHECK(join_tokens(color.reverse_instruction) == "change the color from blue to red");

  const Item bird = make_item(s, "1", "green", "wooden", "bird", "park");
  const EditTuple count = find_edit(s, bird, "count", "2");
  CHECK(join_tokens(count.instruction) == "make it 2 bird");
  CHECK(join_tokens(count.reverse_instruction) == "make it 1 bird");

  Rng rng(17);
  for (const Item& it : gen_items(s, 200, rng)) {
    Rng er = rng.split(static_cast<std::uint64_t>(it.id));
    const EditTuple t = gen_edit_tuple(s, it, er);
    const Item target = edited_item(s, it, t);
    CHECK(render_caption(s, target) == t.modified_caption);
    const auto back = apply_instruction(s, target, t.reverse_instruction);
    REQUIRE(back.has_value());
    CHECK(back->same_attributes(it));
  }
}

TEST_CASE("visual features") {
  const AttributeSchema s = AttributeSchema::defaults();
  CHECK(s.feature_dim() == 38u);
  const Item it = make_item(s, "3", "blue", "glass", "cat", "beach");
  Rng rng(1);
  const Vector clean = visual_feature(s, it, 0.0, rng);
  double total = 0.0;
  for (double v : clean) total += v;
  CHECK(total == 5.0);
  for (Attribute a : kAllAttributes) CHECK(clean[s.block_offset(a) + it.value(a)] == 1.0);

  Rng r1(1), r2(2);
  const Vector n1 = visual_feature(s, it, 0.1, r1), n2 = visual_feature(s, it, 0.1, r2);
  CHECK(n1 != n2);
  for (Attribute a : kAllAttributes) {
    const std::size_t off = s.block_offset(a);
    auto argmax = [&](const Vector& v) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < s.cardinality(a); ++i)
        if (v[off + i] > v[off + best]) best = i;
      return best;
    };
    CHECK(argmax(n1) == it.value(a));
    CHECK(argmax(n2) == it.value(a));
  }
}

TEST_CASE("benchmark construction") {
  const AttributeSchema s = AttributeSchema::defaults();
  Rng rng(21);
  auto refs = gen_items(s, 40, rng);
  std::vector<EditTuple> tuples;
  for (const auto& r : refs) tuples.push_back(gen_edit_tuple(s, r, rng));

  BenchmarkOptions opt;
  opt.gallery_size = 300;
  opt.shortcut_count = 2;
  Rng b1(5);
  const RetrievalBenchmark single = build_benchmark(s, refs, tuples, opt, b1);
  CHECK_FALSE(single.multi_target);
  CHECK(single.gallery.size() == 300);
  for (const auto& q : single.queries) {
    CHECK(q.relevant.size() == 1);
    CHECK(q.candidates.size() == kCandidateSetSize);
    CHECK(q.candidates.front() == q.relevant.front());
    CHECK(q.distractors.size() == 2);
    // Attribute audit: each distractor keeps the edited attribute's new
    // value but is a different item from the target.
    const Attribute a = *attribute_from_name(q.tuple.edited_attribute);
    const Item& target = single.gallery[static_cast<std::size_t>(q.relevant.front())].item;
    CHECK(target.same_attributes(edited_item(s, q.reference, q.tuple)));
    for (int d : q.distractors) {
      const Item& di = single.gallery[static_cast<std::size_t>(d)].item;
      CHECK(di.value(a) == target.value(a));
      CHECK_FALSE(di.same_attributes(target));
    }
  }

  opt.replicas_per_item = 3;
  Rng b2(5);
  const RetrievalBenchmark multi = build_benchmark(s, refs, tuples, opt, b2);
  CHECK(multi.multi_target);
  CHECK(multi.gallery.size() == 900);
  for (const auto& q : multi.queries) {
    CHECK(q.relevant.size() == 3);
    for (int id : q.relevant) CHECK(multi.gallery[static_cast<std::size_t>(id)].item.same_attributes(
        edited_item(s, q.reference, q.tuple)));
  }
}

TEST_CASE("too few distractors") {
  const AttributeSchema s = AttributeSchema::sized(2, 2, 2, 1, 1);
  Rng rng(2);
  auto refs = gen_items(s, 2, rng);
  std::vector<EditTuple> tuples;
  for (const auto& r : refs) tuples.push_back(gen_edit_tuple(s, r, rng));
  BenchmarkOptions opt;
  opt.gallery_size = 8;
  opt.shortcut_count = 5;
  Rng b(1);
  try {
    build_benchmark(s, refs, tuples, opt, b);
    FAIL("expected InsufficientDistractors");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientDistractors);
  }
}

TEST_CASE("tuple files") {
  const AttributeSchema s = AttributeSchema::defaults();
  const auto dir = lrdm::testing::temp_dir("tuples");
  Rng rng(8);
  std::vector<EditTuple> tuples;
  for (const auto& it : gen_items(s, 100, rng)) tuples.push_back(gen_edit_tuple(s, it, rng));
  export_tuples(tuples, dir / "t.jsonl");
  const ImportResult back = import_tuples(dir / "t.jsonl");
  CHECK(back.skipped == 0);
  CHECK(back.tuples == tuples);

  {
    std::ifstream in(dir / "t.jsonl");
    std::string first, second;
    std::getline(in, first);
    std::getline(in, second);
    auto j = nlohmann::json::parse(second);
    j.erase("reverse_instruction");
    std::ofstream out(dir / "bad.jsonl");
    out << first << "\n" << j.dump() << "\n";
  }
  const ImportResult partial = import_tuples(dir / "bad.jsonl");
  CHECK(partial.tuples.size() == 1);
  CHECK(partial.skipped == 1);

  { std::ofstream empty(dir / "empty.jsonl"); }
  const ImportResult none = import_tuples(dir / "empty.jsonl");
  CHECK(none.tuples.empty());
  CHECK(none.skipped == 0);
}

TEST_CASE("benchmark json round trip") {
  const AttributeSchema s = lrdm::testing::small_schema();
  WorldOptions w;
  w.schema = s;
  w.train_tuples = 20;
  w.val_queries = 5;
  w.val_gallery = 30;
  w.test_queries = 6;
  w.test.gallery_size = 40;
  w.test.shortcut_count = 2;
  Rng rng(4);
  const World world = build_world(w, rng);
  const auto dir = lrdm::testing::temp_dir("bench");
  save_benchmark(world.test, dir / "b.json", "abc");
  const RetrievalBenchmark back = load_benchmark(dir / "b.json");
  CHECK(back.queries.size() == world.test.queries.size());
  CHECK(back.gallery.size() == world.test.gallery.size());
  for (std::size_t i = 0; i < back.gallery.size(); ++i) CHECK(back.gallery[i].feature == world.test.gallery[i].feature);
  CHECK(benchmark_to_json(back) == benchmark_to_json(world.test));
}
