// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/merge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace lrdm {

std::string rule_name(MergeRule rule) {
  switch (rule) {
    case MergeRule::LRDM: return "lrdm";
    case MergeRule::TaskArithmetic: return "task_arithmetic";
    case MergeRule::TIES: return "ties";
    case MergeRule::DARE: return "dare";
    case MergeRule::DareTies: return "dare_ties";
  }
  return "?";
}

std::optional<MergeRule> rule_from_name(const std::string& name) {
  for (MergeRule r : {MergeRule::LRDM, MergeRule::TaskArithmetic, MergeRule::TIES, MergeRule::DARE,
                      MergeRule::DareTies})
    if (rule_name(r) == name) return r;
  return std::nullopt;
}

void MergeSpec::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "merge alpha must lie in [0, 1]");
  if (!(ties_density > 0.0 && ties_density <= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "ties_density must lie in (0, 1]");
  if (!(dare_drop_p >= 0.0 && dare_drop_p < 1.0)) throw Error(ErrorCode::ConfigInvalid, "dare_drop_p must lie in [0, 1)");
}

AdapterStack lrdm_merge(const AdapterStack& stack, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "alpha must lie in [0, 1]");
  AdapterStack out = stack;
  for (LoraLayer& layer : out.text) {
    auto e = layer.coeff_end.values();
    auto t = layer.coeff_trans.values();
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = (1.0 - alpha) * e[k] + alpha * t[k];
    layer.coeff_trans.fill(0.0);
  }
  return out;
}

TaskVector task_vector(const AdapterStack& stack, BranchId branch) {
  TaskVector tv;
  tv.reserve(stack.text.size());
  for (const LoraLayer& layer : stack.text) tv.push_back(delta_weight(layer, branch));
  return tv;
}

namespace {

void check_layers(const std::vector<TaskVector>& tvs) {
  if (tvs.empty()) throw Error(ErrorCode::DimMismatch, "no task vectors");
  for (const TaskVector& tv : tvs) {
    if (tv.size() != tvs[0].size()) throw Error(ErrorCode::DimMismatch, "task vectors differ in layer count");
    for (std::size_t l = 0; l < tv.size(); ++l)
      if (tv[l].rows() != tvs[0][l].rows() || tv[l].cols() != tvs[0][l].cols())
        throw Error(ErrorCode::DimMismatch, "task vector layer " + std::to_string(l) + " shape");
  }
}

std::vector<double> default_weights(std::size_t n, const std::vector<double>& weights) {
  if (weights.empty()) return std::vector<double>(n, 1.0);
  if (weights.size() != n) throw Error(ErrorCode::DimMismatch, "weights vs task vectors");
  for (double w : weights)
    if (!std::isfinite(w)) throw Error(ErrorCode::ConfigInvalid, "non-finite merge weight");
  return weights;
}

}  // namespace

TaskVector task_arithmetic(const std::vector<TaskVector>& tvs, const std::vector<double>& weights) {
  check_layers(tvs);
  const std::vector<double> w = default_weights(tvs.size(), weights);
  TaskVector out;
  for (std::size_t l = 0; l < tvs[0].size(); ++l) {
    Matrix m(tvs[0][l].rows(), tvs[0][l].cols());
    auto dst = m.values();
    // Accumulate per entry in vector order so two-term sums match the
    // coefficient interpolation bit for bit where possible.
    for (std::size_t k = 0; k < dst.size(); ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < tvs.size(); ++i) acc += w[i] * tvs[i][l].values()[k];
      dst[k] = acc;
    }
    out.push_back(std::move(m));
  }
  return out;
}

Vector ties_merge(const std::vector<Vector>& vs, double density, const std::vector<double>& weights) {
  if (vs.empty()) throw Error(ErrorCode::DimMismatch, "no vectors");
  if (!(density > 0.0 && density <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "density must lie in (0, 1]");
  const std::size_t n = vs[0].size();
  for (const Vector& v : vs)
    if (v.size() != n) throw Error(ErrorCode::DimMismatch, "ties_merge vector sizes");
  const std::vector<double> w = default_weights(vs.size(), weights);
  // Small epsilon guards against 2/3 * 3 landing just above 2.
  const std::size_t keep = std::min(n, static_cast<std::size_t>(std::ceil(density * static_cast<double>(n) - 1e-9)));

  std::vector<Vector> trimmed;
  trimmed.reserve(vs.size());
  for (const Vector& v : vs) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::fabs(v[a]) > std::fabs(v[b]); });
    Vector t(n, 0.0);
    for (std::size_t i = 0; i < keep; ++i) t[order[i]] = v[order[i]];
    trimmed.push_back(std::move(t));
  }
  Vector out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double pos = 0.0, neg = 0.0;
    for (std::size_t i = 0; i < trimmed.size(); ++i) {
      const double x = w[i] * trimmed[i][k];
      if (x > 0.0) pos += x;
      if (x < 0.0) neg -= x;
    }
    if (pos == 0.0 && neg == 0.0) continue;
    const double sign = pos >= neg ? 1.0 : -1.0;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < trimmed.size(); ++i) {
      const double x = trimmed[i][k];
      if (x * sign > 0.0) {
        num += w[i] * x;
        den += w[i];
      }
    }
    out[k] = den != 0.0 ? num / den : 0.0;
  }
  return out;
}

TaskVector ties_merge(const std::vector<TaskVector>& tvs, double density, const std::vector<double>& weights) {
  check_layers(tvs);
  TaskVector out;
  for (std::size_t l = 0; l < tvs[0].size(); ++l) {
    std::vector<Vector> flat;
    for (const TaskVector& tv : tvs) flat.emplace_back(tv[l].values().begin(), tv[l].values().end());
    out.emplace_back(tvs[0][l].rows(), tvs[0][l].cols(), ties_merge(flat, density, weights));
  }
  return out;
}

Vector dare(std::span<const double> v, double drop_p, Rng& rng) {
  if (!(drop_p >= 0.0 && drop_p < 1.0)) throw Error(ErrorCode::ConfigInvalid, "drop_p must lie in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - drop_p);
  Vector out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = rng.uniform() < drop_p ? 0.0 : v[k] * keep_scale;
  return out;
}

Matrix dare(const Matrix& m, double drop_p, Rng& rng) {
  return Matrix(m.rows(), m.cols(), dare(m.values(), drop_p, rng));
}

TaskVector dare_ties(const std::vector<TaskVector>& tvs, double drop_p, double density, std::uint64_t seed,
                     const std::vector<double>& weights) {
  check_layers(tvs);
  const Rng root(seed);
  std::vector<TaskVector> dropped;
  for (std::size_t i = 0; i < tvs.size(); ++i) {
    Rng r = root.split("dare").split(i);
    TaskVector tv;
    for (const Matrix& m : tvs[i]) tv.push_back(dare(m, drop_p, r));
    dropped.push_back(std::move(tv));
  }
  return ties_merge(dropped, density, weights);
}

TowerWeights fold_delta(const AdapterStack& stack, const TaskVector& delta) {
  if (delta.size() != stack.text.size()) throw Error(ErrorCode::DimMismatch, "delta layer count");
  TowerWeights w = stack.view(BranchId::End);
  for (std::size_t l = 0; l < delta.size(); ++l) {
    Matrix m = stack.text[l].base;
    add_scaled_inplace(m, 1.0, delta[l]);
    w.text[l] = std::move(m);
  }
  return w;
}

TowerWeights merged_weights(const AdapterStack& stack, const MergeSpec& spec) {
  spec.validate();
  const std::vector<double> weights = {1.0 - spec.alpha, spec.alpha};
  if (spec.rule == MergeRule::LRDM) return lrdm_merge(stack, spec.alpha).view(BranchId::End);
  const std::vector<TaskVector> tvs = {task_vector(stack, BranchId::End), task_vector(stack, BranchId::Trans)};
  switch (spec.rule) {
    case MergeRule::TaskArithmetic:
      return fold_delta(stack, task_arithmetic(tvs, weights));
    case MergeRule::TIES:
      return fold_delta(stack, ties_merge(tvs, spec.ties_density, weights));
    case MergeRule::DARE: {
      const Rng root(spec.seed);
      std::vector<TaskVector> dropped;
      for (std::size_t i = 0; i < tvs.size(); ++i) {
        Rng r = root.split("dare").split(i);
        TaskVector tv;
        for (const Matrix& m : tvs[i]) tv.push_back(dare(m, spec.dare_drop_p, r));
        dropped.push_back(std::move(tv));
      }
      return fold_delta(stack, task_arithmetic(dropped, weights));
    }
    case MergeRule::DareTies:
      return fold_delta(stack, dare_ties(tvs, spec.dare_drop_p, spec.ties_density, spec.seed, weights));
    case MergeRule::LRDM:
      break;
  }
  return lrdm_merge(stack, spec.alpha).view(BranchId::End);
}

std::vector<SweepRow> alpha_sweep(const AdapterStack& stack, const std::vector<double>& grid,
                                  const RetrievalBenchmark& bench, std::size_t max_queries) {
  std::vector<SweepRow> rows;
  if (grid.empty()) return rows;
  const GalleryIndex index = build_gallery_index(bench, stack.view(BranchId::End));
  for (double a : grid) {
    const TowerWeights w = lrdm_merge(stack, a).view(BranchId::End);
    rows.push_back({a, evaluate(bench, w, index, max_queries)});
  }
  return rows;
}

double best_alpha(const std::vector<SweepRow>& rows) {
  if (rows.empty()) throw Error(ErrorCode::ConfigInvalid, "empty alpha sweep");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double a = rows[i].metrics.r_at_1, b = rows[best].metrics.r_at_1;
    if (a > b || (a == b && rows[i].alpha < rows[best].alpha)) best = i;
  }
  return rows[best].alpha;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path,
                     const std::string& config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  if (!config_hash.empty()) f << "# config_hash=" << config_hash << "\n";
  f << "alpha,r_at_1,r_at_5,map_at_10,shortcut_gap\n";
  char buf[256];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", r.alpha, r.metrics.r_at_1, r.metrics.r_at_5,
                  r.metrics.map_at_10, r.metrics.shortcut_gap);
    f << buf;
  }
}

}  // namespace lrdm
