// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lrdm/encoder.hpp"
#include "lrdm/synthworld.hpp"

namespace lrdm {

struct GalleryIndex {
  std::vector<int> ids;
  Matrix embeddings;  // one unit-norm row per gallery entry
};

GalleryIndex build_gallery_index(const RetrievalBenchmark& bench, const TowerWeights& weights);

// Unit-norm embedding of "a photo of * and <t_fwd>" with the mapped reference.
Vector compose_query(const EditTuple& tuple, std::span<const double> ref_feature, const TowerWeights& weights,
                     const Vocab& vocab);

// Gallery ids by descending cosine; equal scores ordered by ascending id.
std::vector<int> rank(std::span<const double> query, const GalleryIndex& index);

using Ranking = std::vector<int>;

double recall_at_k(const std::vector<Ranking>& rankings, const std::vector<std::vector<int>>& relevant,
                   std::size_t k);
// Rankings are filtered to each query's candidate set before recall.
double subset_recall(const std::vector<Ranking>& rankings, const std::vector<std::vector<int>>& candidates,
                     const std::vector<std::vector<int>>& relevant, std::size_t k);
double average_precision_at_k(const Ranking& ranking, const std::vector<int>& relevant, std::size_t k);
double map_at_k(const std::vector<Ranking>& rankings, const std::vector<std::vector<int>>& relevant, std::size_t k);
// Fraction of queries whose best-ranked shortcut distractor beats every relevant item.
double shortcut_gap(const std::vector<Ranking>& rankings, const std::vector<std::vector<int>>& relevant,
                    const std::vector<std::vector<int>>& distractors);

struct MetricsReport {
  double r_at_1 = 0.0, r_at_5 = 0.0, r_at_10 = 0.0;
  double rs_at_1 = 0.0, rs_at_2 = 0.0, rs_at_3 = 0.0;
  double map_at_5 = 0.0, map_at_10 = 0.0, map_at_25 = 0.0, map_at_50 = 0.0;
  double shortcut_gap = 0.0;
  std::size_t queries = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Rankings for the first `max_queries` queries (0 = all).
std::vector<Ranking> rank_queries(const RetrievalBenchmark& bench, const TowerWeights& weights,
                                  const GalleryIndex& index, std::size_t max_queries = 0);

MetricsReport compute_metrics(const RetrievalBenchmark& bench, const std::vector<Ranking>& rankings);

// Builds the index, ranks, and scores.
MetricsReport evaluate(const RetrievalBenchmark& bench, const TowerWeights& weights, std::size_t max_queries = 0);
MetricsReport evaluate(const RetrievalBenchmark& bench, const TowerWeights& weights, const GalleryIndex& index,
                       std::size_t max_queries = 0);

nlohmann::json metrics_to_json(const MetricsReport& m);
void write_metrics_json(const MetricsReport& m, const std::filesystem::path& path, const std::string& config_hash = "");
void write_metrics_csv(const MetricsReport& m, const std::filesystem::path& path, const std::string& config_hash = "");

}  // namespace lrdm
