// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/probe.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace lrdm {

void ProbeConfig::validate() const {
  if (batches < 2 || batches % 2 != 0) throw Error(ErrorCode::ConfigInvalid, "probe.batches must be even and >= 2");
  if (batch_size < 2) throw Error(ErrorCode::ConfigInvalid, "probe.batch_size must be >= 2");
  if (!(omega >= 0.0 && omega <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "probe.omega must lie in [0, 1]");
}

namespace {

std::string coeff_key(std::size_t l, BranchId b) {
  return "text." + std::to_string(l) + (b == BranchId::End ? ".coeff_end" : ".coeff_trans");
}

std::vector<Vector> flatten_layers(const AdapterStack& stack, const ParamGrads& grads, BranchId branch) {
  std::vector<Vector> out;
  for (std::size_t l = 0; l < stack.text.size(); ++l) {
    const Matrix& g = grads.at(coeff_key(l, branch));
    out.emplace_back(g.values().begin(), g.values().end());
  }
  return out;
}

}  // namespace

std::vector<std::vector<Vector>> per_batch_grads(const AdapterStack& stack, Objective objective,
                                                 const TrainingData& data, const std::vector<Batch>& batches,
                                                 const ProbeConfig& config) {
  std::vector<std::vector<Vector>> out;
  out.reserve(batches.size());
  for (const Batch& b : batches) {
    if (objective == Objective::Endpoint) {
      const EndpointGradients eg = endpoint_gradients(stack, BranchId::End, data, b);
      out.push_back(flatten_layers(stack, eg.grads, BranchId::End));
    } else {
      const BranchId branch = config.decoupled ? BranchId::Trans : BranchId::End;
      const TransitionGradients tg = transition_gradients(stack, branch, data, b, config.omega, false);
      if (tg.valid == 0) throw Error(ErrorCode::DegenerateBatch, "every tuple in a probe batch has a degenerate delta");
      out.push_back(flatten_layers(stack, tg.grads, branch));
    }
  }
  return out;
}

GradGroup sum_group(Objective objective, const std::vector<std::vector<Vector>>& per_batch, std::size_t begin,
                    std::size_t end) {
  GradGroup g;
  g.objective = objective;
  if (begin >= end || end > per_batch.size()) throw Error(ErrorCode::ConfigInvalid, "empty batch range");
  g.layers = per_batch[begin];
  for (std::size_t b = begin + 1; b < end; ++b)
    for (std::size_t l = 0; l < g.layers.size(); ++l) axpy(1.0, per_batch[b][l], g.layers[l]);
  g.batches = end - begin;
  return g;
}

namespace {

std::vector<Batch> draw_batches(const TrainingData& data, const ProbeConfig& config, std::uint64_t seed) {
  std::vector<Batch> batches;
  batches.reserve(config.batches);
  for (std::size_t b = 0; b < config.batches; ++b)
    batches.push_back(make_batch(data, config.batch_size, config.feature_noise, seed, b));
  return batches;
}

bool nonzero(const Vector& v) { return norm(v) > kNormEpsilon; }

}  // namespace

GradGroup collect_grads(const AdapterStack& stack, Objective objective, const TrainingData& data,
                        const ProbeConfig& config, std::uint64_t seed) {
  config.validate();
  const auto per = per_batch_grads(stack, objective, data, draw_batches(data, config, seed), config);
  return sum_group(objective, per, 0, per.size());
}

std::vector<LayerScore> interference_scores(const GradGroup& g_end, const GradGroup& g_trans,
                                            const GradGroup& end_half_a, const GradGroup& end_half_b,
                                            const GradGroup& trans_half_a, const GradGroup& trans_half_b) {
  const std::size_t n = g_end.layers.size();
  for (const GradGroup* g : {&g_trans, &end_half_a, &end_half_b, &trans_half_a, &trans_half_b})
    if (g->layers.size() != n) throw Error(ErrorCode::DimMismatch, "gradient groups differ in layer count");
  std::vector<LayerScore> out(n);
  for (std::size_t l = 0; l < n; ++l) {
    const Vector& e = g_end.layers[l];
    const Vector& t = g_trans.layers[l];
    LayerScore& s = out[l];
    const bool ok = nonzero(e) && nonzero(t) && nonzero(end_half_a.layers[l]) && nonzero(end_half_b.layers[l]) &&
                    nonzero(trans_half_a.layers[l]) && nonzero(trans_half_b.layers[l]);
    if (!ok) continue;
    s.defined = true;
    s.s_cross = cosine_sim(e, t);
    const double base_end = cosine_sim(end_half_a.layers[l], end_half_b.layers[l]);
    const double base_trans = cosine_sim(trans_half_a.layers[l], trans_half_b.layers[l]);
    s.s_base = 0.5 * (base_end + base_trans);
    s.gi = s.s_base - s.s_cross;

    const auto [pe, pt] = pcgrad_project(e, t);
    if (nonzero(pe) && nonzero(pt)) {
      s.pcgrad_defined = true;
      s.s_cross_pcgrad = cosine_sim(pe, pt);
      s.gi_pcgrad = s.s_base - s.s_cross_pcgrad;
    }
  }
  return out;
}

std::vector<ProbeLayerSummary> summarize(const std::vector<std::vector<LayerScore>>& per_seed) {
  std::vector<ProbeLayerSummary> out;
  if (per_seed.empty()) return out;
  const std::size_t n_layers = per_seed[0].size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    ProbeLayerSummary s;
    s.layer = l;
    std::vector<double> gi, gip, cross, base, crossp;
    for (const auto& seed : per_seed) {
      const LayerScore& x = seed.at(l);
      if (!x.defined) continue;
      gi.push_back(x.gi);
      cross.push_back(x.s_cross);
      base.push_back(x.s_base);
      if (x.pcgrad_defined) {
        gip.push_back(x.gi_pcgrad);
        crossp.push_back(x.s_cross_pcgrad);
      }
    }
    auto mean = [](const std::vector<double>& v) {
      if (v.empty()) return std::nan("");
      double acc = 0.0;
      for (double x : v) acc += x;
      return acc / static_cast<double>(v.size());
    };
    auto stdev = [&](const std::vector<double>& v) {
      if (v.size() < 2) return v.empty() ? std::nan("") : 0.0;
      const double m = mean(v);
      double acc = 0.0;
      for (double x : v) acc += (x - m) * (x - m);
      return std::sqrt(acc / static_cast<double>(v.size() - 1));
    };
    s.defined_seeds = gi.size();
    s.s_cross_mean = mean(cross);
    s.s_base_mean = mean(base);
    s.gi_mean = mean(gi);
    s.gi_std = stdev(gi);
    s.s_cross_pcgrad_mean = mean(crossp);
    s.gi_pcgrad_mean = mean(gip);
    s.gi_pcgrad_std = stdev(gip);
    out.push_back(s);
  }
  return out;
}

GradProbeReport probe_report(const std::vector<const AdapterStack*>& checkpoints,
                             const std::vector<std::uint64_t>& seeds, const TrainingData& data,
                             const ProbeConfig& config) {
  config.validate();
  if (seeds.size() < 2) throw Error(ErrorCode::ConfigInvalid, "probe needs at least two seeds");
  if (checkpoints.size() != seeds.size()) throw Error(ErrorCode::DimMismatch, "one checkpoint per probe seed");
  GradProbeReport report;
  report.seeds = seeds;
  const std::size_t m = config.batches;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const AdapterStack& stack = *checkpoints[i];
    const std::vector<Batch> batches = draw_batches(data, config, seeds[i]);
    const auto pe = per_batch_grads(stack, Objective::Endpoint, data, batches, config);
    const auto pt = per_batch_grads(stack, Objective::Transition, data, batches, config);
    report.per_seed.push_back(interference_scores(
        sum_group(Objective::Endpoint, pe, 0, m), sum_group(Objective::Transition, pt, 0, m),
        sum_group(Objective::Endpoint, pe, 0, m / 2), sum_group(Objective::Endpoint, pe, m / 2, m),
        sum_group(Objective::Transition, pt, 0, m / 2), sum_group(Objective::Transition, pt, m / 2, m)));
  }
  report.layers = summarize(report.per_seed);
  return report;
}

GradProbeReport probe_report(const AdapterStack& checkpoint, const std::vector<std::uint64_t>& seeds,
                             const TrainingData& data, const ProbeConfig& config) {
  return probe_report(std::vector<const AdapterStack*>(seeds.size(), &checkpoint), seeds, data, config);
}

namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json num(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

}  // namespace

void write_probe_csv(const GradProbeReport& report, const std::filesystem::path& path, const std::string& config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  if (!config_hash.empty()) f << "# config_hash=" << config_hash << "\n";
  f << "layer,s_cross_mean,s_base_mean,gi_mean,gi_std,defined_seeds,s_cross_pcgrad_mean,gi_pcgrad_mean,gi_pcgrad_std\n";
  for (const ProbeLayerSummary& s : report.layers) {
    f << s.layer << ',' << fmt(s.s_cross_mean) << ',' << fmt(s.s_base_mean) << ',' << fmt(s.gi_mean) << ','
      << fmt(s.gi_std) << ',' << s.defined_seeds << ',' << fmt(s.s_cross_pcgrad_mean) << ','
      << fmt(s.gi_pcgrad_mean) << ',' << fmt(s.gi_pcgrad_std) << '\n';
  }
}

nlohmann::json probe_to_json(const GradProbeReport& report) {
  nlohmann::json doc;
  doc["seeds"] = report.seeds;
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < report.per_seed.size(); ++i) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < report.per_seed[i].size(); ++l) {
      const LayerScore& s = report.per_seed[i][l];
      layers.push_back({{"layer", l},
                        {"defined", s.defined},
                        {"s_cross", s.defined ? num(s.s_cross) : nlohmann::json(nullptr)},
                        {"s_base", s.defined ? num(s.s_base) : nlohmann::json(nullptr)},
                        {"gi", s.defined ? num(s.gi) : nlohmann::json(nullptr)},
                        {"s_cross_pcgrad", s.pcgrad_defined ? num(s.s_cross_pcgrad) : nlohmann::json(nullptr)},
                        {"gi_pcgrad", s.pcgrad_defined ? num(s.gi_pcgrad) : nlohmann::json(nullptr)}});
    }
    per.push_back({{"seed", report.seeds[i]}, {"layers", layers}});
  }
  doc["per_seed"] = per;
  nlohmann::json summary = nlohmann::json::array();
  for (const ProbeLayerSummary& s : report.layers) {
    summary.push_back({{"layer", s.layer},
                       {"defined_seeds", s.defined_seeds},
                       {"s_cross_mean", num(s.s_cross_mean)},
                       {"s_base_mean", num(s.s_base_mean)},
                       {"gi_mean", num(s.gi_mean)},
                       {"gi_std", num(s.gi_std)},
                       {"s_cross_pcgrad_mean", num(s.s_cross_pcgrad_mean)},
                       {"gi_pcgrad_mean", num(s.gi_pcgrad_mean)},
                       {"gi_pcgrad_std", num(s.gi_pcgrad_std)}});
  }
  doc["layers"] = summary;
  return doc;
}

}  // namespace lrdm
