// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/retrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace lrdm {

GalleryIndex build_gallery_index(const RetrievalBenchmark& bench, const TowerWeights& weights) {
  GalleryIndex index;
  index.embeddings = Matrix(bench.gallery.size(), weights.config.d_model);
  index.ids.reserve(bench.gallery.size());
  std::unordered_set<int> seen;
  for (std::size_t i = 0; i < bench.gallery.size(); ++i) {
    const GalleryEntry& g = bench.gallery[i];
    if (!seen.insert(g.id).second) throw Error(ErrorCode::CorruptTensor, "duplicate gallery id " + std::to_string(g.id));
    index.ids.push_back(g.id);
    const Vector e = encode_visual(weights, g.feature);
    std::copy(e.begin(), e.end(), index.embeddings.row(i).begin());
  }
  return index;
}

Vector compose_query(const EditTuple& tuple, std::span<const double> ref_feature, const TowerWeights& weights,
                     const Vocab& vocab) {
  const Vector pseudo = map_visual(weights, ref_feature);
  return encode_text(weights, vocab.encode(compose_prompt(tuple.instruction)), &pseudo);
}

std::vector<int> rank(std::span<const double> query, const GalleryIndex& index) {
  if (query.size() != index.embeddings.cols()) throw Error(ErrorCode::DimMismatch, "query vs gallery dimension");
  const std::size_t n = index.ids.size();
  const double qn = norm(query);
  if (!(qn > kNormEpsilon)) throw Error(ErrorCode::DegenerateNorm, "query has zero norm");
  std::vector<std::pair<double, int>> scored(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = index.embeddings.row(i);
    scored[i] = {dot(query, row) / (qn * norm(row)), index.ids[i]};
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<int> out;
  out.reserve(n);
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

namespace {

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw Error(ErrorCode::DimMismatch, "rankings vs relevance sets");
}

}  // namespace

double recall_at_k(const std::vector<Ranking>& rankings, const std::vector<std::vector<int>>& relevant,
                   std::size_t k) {
  if (k < 1) throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");
  check_sizes(rankings.size(), relevant.size());
  if (rankings.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const std::size_t top = std::min(k, rankings[q].size());
    for (std::size_t i = 0; i < top; ++i) {
      if (contains(relevant[q], rankings[q][i])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double subset_recall(const std::vector<Ranking>& rankings, const std::vector<std::vector<int>>& candidates,
                     const std::vector<std::vector<int>>& relevant, std::size_t k) {
  check_sizes(rankings.size(), relevant.size());
  check_sizes(rankings.size(), candidates.size());
  std::vector<Ranking> filtered(rankings.size());
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    bool has_relevant = false;
    for (int c : candidates[q]) has_relevant = has_relevant || contains(relevant[q], c);
    if (candidates[q].empty() || !has_relevant)
      throw Error(ErrorCode::CandidateSetInvalid, "query " + std::to_string(q) + " candidate set lacks a relevant id");
    for (int id : rankings[q])
      if (contains(candidates[q], id)) filtered[q].push_back(id);
    if (filtered[q].size() != candidates[q].size())
      throw Error(ErrorCode::CandidateSetInvalid, "query " + std::to_string(q) + " candidate not in gallery");
  }
  return recall_at_k(filtered, relevant, k);
}

double average_precision_at_k(const Ranking& ranking, const std::vector<int>& relevant, std::size_t k) {
  if (k < 1) throw Error(ErrorCode::ConfigInvalid, "k must be >= 1");
  if (relevant.empty()) throw Error(ErrorCode::ConfigInvalid, "empty relevant set");
  const std::size_t top = std::min(k, ranking.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < top; ++i) {
    if (contains(relevant, ranking[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(std::min(relevant.size(), k));
}

double map_at_k(const std::vector<Ranking>& rankings, const std::vector<std::vector<int>>& relevant, std::size_t k) {
  check_sizes(rankings.size(), relevant.size());
  if (rankings.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t q = 0; q < rankings.size(); ++q) sum += average_precision_at_k(rankings[q], relevant[q], k);
  return sum / static_cast<double>(rankings.size());
}

double shortcut_gap(const std::vector<Ranking>& rankings, const std::vector<std::vector<int>>& relevant,
                    const std::vector<std::vector<int>>& distractors) {
  check_sizes(rankings.size(), relevant.size());
  check_sizes(rankings.size(), distractors.size());
  if (rankings.empty()) return 0.0;
  std::size_t beaten = 0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    if (distractors[q].empty()) continue;
    // The first hit from either set decides the query.
    for (int id : rankings[q]) {
      if (contains(relevant[q], id)) break;
      if (contains(distractors[q], id)) {
        ++beaten;
        break;
      }
    }
  }
  return static_cast<double>(beaten) / static_cast<double>(rankings.size());
}

std::vector<Ranking> rank_queries(const RetrievalBenchmark& bench, const TowerWeights& weights,
                                  const GalleryIndex& index, std::size_t max_queries) {
  const Vocab vocab(bench.schema);
  const std::size_t n = max_queries == 0 ? bench.queries.size() : std::min(max_queries, bench.queries.size());
  std::vector<Ranking> out;
  out.reserve(n);
  for (std::size_t q = 0; q < n; ++q) {
    const BenchmarkQuery& bq = bench.queries[q];
    out.push_back(rank(compose_query(bq.tuple, bq.ref_feature, weights, vocab), index));
  }
  return out;
}

MetricsReport compute_metrics(const RetrievalBenchmark& bench, const std::vector<Ranking>& rankings) {
  const std::size_t n = rankings.size();
  std::vector<std::vector<int>> rel(n), cand(n), dis(n);
  for (std::size_t q = 0; q < n; ++q) {
    rel[q] = bench.queries[q].relevant;
    cand[q] = bench.queries[q].candidates;
    dis[q] = bench.queries[q].distractors;
  }
  MetricsReport m;
  m.queries = n;
  m.r_at_1 = recall_at_k(rankings, rel, 1);
  m.r_at_5 = recall_at_k(rankings, rel, 5);
  m.r_at_10 = recall_at_k(rankings, rel, 10);
  m.rs_at_1 = subset_recall(rankings, cand, rel, 1);
  m.rs_at_2 = subset_recall(rankings, cand, rel, 2);
  m.rs_at_3 = subset_recall(rankings, cand, rel, 3);
  m.map_at_5 = map_at_k(rankings, rel, 5);
  m.map_at_10 = map_at_k(rankings, rel, 10);
  m.map_at_25 = map_at_k(rankings, rel, 25);
  m.map_at_50 = map_at_k(rankings, rel, 50);
  m.shortcut_gap = shortcut_gap(rankings, rel, dis);
  return m;
}

MetricsReport evaluate(const RetrievalBenchmark& bench, const TowerWeights& weights, const GalleryIndex& index,
                       std::size_t max_queries) {
  return compute_metrics(bench, rank_queries(bench, weights, index, max_queries));
}

MetricsReport evaluate(const RetrievalBenchmark& bench, const TowerWeights& weights, std::size_t max_queries) {
  return evaluate(bench, weights, build_gallery_index(bench, weights), max_queries);
}

nlohmann::json metrics_to_json(const MetricsReport& m) {
  return nlohmann::json{{"r_at_1", m.r_at_1},       {"r_at_5", m.r_at_5},       {"r_at_10", m.r_at_10},
                        {"rs_at_1", m.rs_at_1},     {"rs_at_2", m.rs_at_2},     {"rs_at_3", m.rs_at_3},
                        {"map_at_5", m.map_at_5},   {"map_at_10", m.map_at_10}, {"map_at_25", m.map_at_25},
                        {"map_at_50", m.map_at_50}, {"shortcut_gap", m.shortcut_gap}, {"queries", m.queries}};
}

void write_metrics_json(const MetricsReport& m, const std::filesystem::path& path, const std::string& config_hash) {
  nlohmann::json doc = metrics_to_json(m);
  if (!config_hash.empty()) doc["config_hash"] = config_hash;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << doc.dump(2) << "\n";
}

void write_metrics_csv(const MetricsReport& m, const std::filesystem::path& path, const std::string& config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  if (!config_hash.empty()) f << "# config_hash=" << config_hash << "\n";
  f << "r_at_1,r_at_5,r_at_10,rs_at_1,rs_at_2,rs_at_3,map_at_5,map_at_10,map_at_25,map_at_50,shortcut_gap,queries\n";
  char buf[512];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", m.r_at_1,
                m.r_at_5, m.r_at_10, m.rs_at_1, m.rs_at_2, m.rs_at_3, m.map_at_5, m.map_at_10, m.map_at_25,
                m.map_at_50, m.shortcut_gap, m.queries);
  f << buf;
}

}  // namespace lrdm
