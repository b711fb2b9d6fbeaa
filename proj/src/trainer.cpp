// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/trainer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <unordered_map>

namespace lrdm {

std::string mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Decoupled: return "decoupled";
    case TrainMode::JointShared: return "joint_shared";
    case TrainMode::JointPCGrad: return "joint_pcgrad";
    case TrainMode::EndpointOnly: return "endpoint_only";
    case TrainMode::TransitionOnly: return "transition_only";
  }
  return "?";
}

std::string mode_label(TrainMode mode) {
  switch (mode) {
    case TrainMode::Decoupled: return "Decoupled+LRDM";
    case TrainMode::JointShared: return "Joint";
    case TrainMode::JointPCGrad: return "Joint+PCGrad";
    case TrainMode::EndpointOnly: return "Endpoint only";
    case TrainMode::TransitionOnly: return "Transition only";
  }
  return "?";
}

std::optional<TrainMode> mode_from_name(const std::string& name) {
  for (TrainMode m : kAllModes)
    if (mode_name(m) == name) return m;
  return std::nullopt;
}

BranchId inference_branch(TrainMode mode) {
  return mode == TrainMode::TransitionOnly ? BranchId::Trans : BranchId::End;
}

void TrainConfig::validate() const {
  if (steps < 1) throw Error(ErrorCode::ConfigInvalid, "train.steps must be >= 1");
  if (batch_size < 2) throw Error(ErrorCode::ConfigInvalid, "train.batch_size must be >= 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorCode::ConfigInvalid, "train.learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "train.weight_decay must be >= 0");
  if (!(lambda_trans >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "train.lambda_trans must be >= 0");
  if (!(omega >= 0.0 && omega <= 1.0)) throw Error(ErrorCode::ConfigInvalid, "train.omega must lie in [0, 1]");
  if (!(feature_noise >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "train.feature_noise must be >= 0");
}

double learning_rate_at(const TrainConfig& config, std::size_t step) {
  const double base = config.learning_rate;
  if (step < config.warmup_steps) {
    return base * static_cast<double>(step + 1) / static_cast<double>(config.warmup_steps);
  }
  const std::size_t span = config.steps > config.warmup_steps ? config.steps - config.warmup_steps : 1;
  const double progress = std::min(1.0, static_cast<double>(step - config.warmup_steps) / static_cast<double>(span));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---------------------------------------------------------------------------

void adamw_update(Matrix& param, const Matrix& grad, AdamSlot& slot, double lr, double weight_decay, double beta1,
                  double beta2, double eps) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols())
    throw Error(ErrorCode::DimMismatch, "adamw_update shapes");
  if (slot.m.empty()) {
    slot.m = Matrix(param.rows(), param.cols());
    slot.v = Matrix(param.rows(), param.cols());
  }
  slot.t += 1;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(slot.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(slot.t));
  auto p = param.values();
  auto g = grad.values();
  auto m = slot.m.values();
  auto v = slot.v.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
    const double mhat = m[k] / c1;
    const double vhat = v[k] / c2;
    p[k] -= lr * weight_decay * p[k] + lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void apply_updates(AdapterStack& stack, const ParamGrads& grads, OptimizerState& opt, double lr,
                   double weight_decay) {
  for (const auto& [name, g] : grads) {
    Matrix* p = stack.find(name);
    if (p == nullptr) throw Error(ErrorCode::ConfigInvalid, "unknown parameter " + name);
    if (!all_finite(g.values())) throw Error(ErrorCode::NonFiniteLoss, "non-finite gradient for " + name);
    const double wd = name == "log_tau" ? 0.0 : weight_decay;
    adamw_update(*p, g, opt.slots[name], lr, wd, opt.beta1, opt.beta2, opt.eps);
  }
}

// ---------------------------------------------------------------------------

TrainingData prepare_training_data(const AttributeSchema& schema, const std::vector<Item>& items,
                                   const std::vector<EditTuple>& tuples) {
  const Vocab vocab(schema);
  std::unordered_map<int, const Item*> by_id;
  for (const Item& it : items) by_id[it.id] = &it;
  TrainingData data;
  data.schema = schema;
  data.source_prompt = vocab.encode(source_prompt());
  data.tuples.reserve(tuples.size());
  for (const EditTuple& t : tuples) {
    auto it = by_id.find(t.ref_item_id);
    if (it == by_id.end())
      throw Error(ErrorCode::MalformedRecord, "tuple references unknown item " + std::to_string(t.ref_item_id));
    PreparedTuple p;
    p.reference = *it->second;
    p.query = vocab.encode(compose_prompt(t.instruction));
    p.target = vocab.encode(t.modified_caption);
    p.source_caption = vocab.encode(t.source_caption);
    p.forward = vocab.encode(t.instruction);
    p.reverse = vocab.encode(t.reverse_instruction);
    data.tuples.push_back(std::move(p));
  }
  return data;
}

Batch make_batch(const TrainingData& data, std::size_t batch_size, double noise, std::uint64_t seed,
                 std::size_t step) {
  const std::size_t n = data.tuples.size();
  if (n < batch_size) throw Error(ErrorCode::ConfigInvalid, "fewer tuples than batch_size");
  const Rng root(seed);
  Rng pick = root.split("batch").split(step);
  Rng jitter = root.split("noise").split(step);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Batch b;
  b.indices.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + pick.uniform_int(n - i);
    std::swap(perm[i], perm[j]);
    b.indices.push_back(perm[i]);
  }
  b.features.reserve(batch_size);
  for (std::size_t idx : b.indices) b.features.push_back(visual_feature(data.schema, data.tuples[idx].reference, noise, jitter));
  return b;
}

// ---------------------------------------------------------------------------

namespace {

std::string text_key(std::size_t l, const char* field) { return "text." + std::to_string(l) + "." + field; }
const char* coeff_field(BranchId b) { return b == BranchId::End ? "coeff_end" : "coeff_trans"; }

void check_mask(const AdapterStack& stack, PassId pass, const ParamGrads& grads) {
  const auto mask = trainable_mask(stack, pass);
  for (const auto& [name, g] : grads) {
    (void)g;
    if (std::find(mask.begin(), mask.end(), name) == mask.end())
      throw Error(ErrorCode::ConfigInvalid, "gradient for non-trainable tensor " + name);
  }
}

std::vector<Vector> rows_of(const std::vector<TextTrace>& traces) {
  std::vector<Vector> out;
  out.reserve(traces.size());
  for (const auto& t : traces) out.push_back(t.out);
  return out;
}

}  // namespace

EndpointGradients endpoint_gradients(const AdapterStack& stack, BranchId branch, const TrainingData& data,
                                     const Batch& batch) {
  const TowerWeights w = stack.view(branch);
  const std::size_t n = batch.indices.size();
  std::vector<VisualTrace> vis(n);
  std::vector<MappingTrace> maps(n);
  std::vector<TextTrace> q(n), t(n);
  for (std::size_t i = 0; i < n; ++i) {
    const PreparedTuple& tup = data.tuples[batch.indices[i]];
    vis[i] = visual_forward(w, batch.features[i]);
    maps[i] = mapping_forward(w, vis[i].out);
    q[i] = text_forward(w, tup.query, &maps[i].out);
    t[i] = text_forward(w, tup.target, nullptr);
  }
  const std::vector<Vector> qs = rows_of(q);
  const std::vector<Vector> ts = rows_of(t);
  const EndpointLoss el = endpoint_loss(qs, ts, w.log_tau);

  TowerGrads g = TowerGrads::zeros_like(w, false);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector g_pseudo = text_backward(w, q[i], el.grad_queries[i], g);
    const Vector g_vis = mapping_backward(w, maps[i], g_pseudo, g);
    visual_backward(w, vis[i], g_vis, g);
    text_backward(w, t[i], el.grad_targets[i], g);
  }

  EndpointGradients out;
  out.loss = el.loss;
  for (std::size_t l = 0; l < stack.text.size(); ++l) {
    const LoraLayer& layer = stack.text[l];
    Matrix gb, ga;
    lora_factor_grads(layer.basis, layer.coeff(branch), layer.scale, g.text[l], gb, ga);
    out.grads[text_key(l, "basis")] = std::move(gb);
    out.grads[text_key(l, coeff_field(branch))] = std::move(ga);
  }
  Matrix gvb, gvc;
  lora_factor_grads(stack.visual.basis, stack.visual.coeff, stack.visual.scale, g.visual, gvb, gvc);
  out.grads["visual.basis"] = std::move(gvb);
  out.grads["visual.coeff"] = std::move(gvc);
  out.grads["mapping.w1"] = std::move(g.mapping.w1);
  out.grads["mapping.w2"] = std::move(g.mapping.w2);
  out.grads["mapping.w3"] = std::move(g.mapping.w3);
  Matrix gt(1, 1);
  gt(0, 0) = el.grad_log_tau;
  out.grads["log_tau"] = std::move(gt);
  return out;
}

TransitionGradients transition_gradients(const AdapterStack& stack, BranchId branch, const TrainingData& data,
                                         const Batch& batch, double omega, bool include_basis,
                                         const AdapterStack* anchor_stack) {
  const TowerWeights w = stack.view(branch);
  TowerWeights anchor_weights;
  if (anchor_stack != nullptr) anchor_weights = anchor_stack->view(branch);
  const TowerWeights& wa = anchor_stack != nullptr ? anchor_weights : w;

  TransitionGradients out;
  std::vector<std::pair<std::size_t, Vector>> deltas;
  deltas.reserve(batch.indices.size());
  for (std::size_t i = 0; i < batch.indices.size(); ++i) {
    const PreparedTuple& tup = data.tuples[batch.indices[i]];
    const Vector anchor = source_anchor(wa, tup.source_caption, data.source_prompt, batch.features[i], omega);
    try {
      deltas.emplace_back(i, transition_delta(wa, tup.target, anchor));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateDelta) throw;
      ++out.degenerate;
    }
  }
  out.valid = deltas.size();
  if (out.valid == 0) return out;

  const double scale = 1.0 / static_cast<double>(out.valid);
  TowerGrads g = TowerGrads::zeros_like(w, false);
  double sum_fwd = 0.0, sum_rev = 0.0;
  for (const auto& [i, delta] : deltas) {
    const PreparedTuple& tup = data.tuples[batch.indices[i]];
    const TransitionLoss tl = transition_loss(w, tup.forward, tup.reverse, delta, scale, &g);
    sum_fwd += tl.l_fwd;
    sum_rev += tl.l_rev;
  }
  out.l_fwd = sum_fwd * scale;
  out.l_rev = sum_rev * scale;
  if (!std::isfinite(out.l_fwd) || !std::isfinite(out.l_rev))
    throw Error(ErrorCode::NonFiniteLoss, "transition loss is not finite");

  for (std::size_t l = 0; l < stack.text.size(); ++l) {
    const LoraLayer& layer = stack.text[l];
    Matrix gb, ga;
    lora_factor_grads(layer.basis, layer.coeff(branch), layer.scale, g.text[l], gb, ga);
    if (include_basis) out.grads[text_key(l, "basis")] = std::move(gb);
    out.grads[text_key(l, coeff_field(branch))] = std::move(ga);
  }
  return out;
}

// ---------------------------------------------------------------------------

LossBreakdown train_step_endpoint(AdapterStack& stack, const TrainingData& data, const Batch& batch,
                                  OptimizerState& opt, double lr, double weight_decay) {
  EndpointGradients eg = endpoint_gradients(stack, BranchId::End, data, batch);
  check_mask(stack, PassId::EndpointPass, eg.grads);
  apply_updates(stack, eg.grads, opt, lr, weight_decay);
  LossBreakdown lb;
  lb.l_end = eg.loss;
  return lb;
}

LossBreakdown train_step_transition(AdapterStack& stack, const TrainingData& data, const Batch& batch,
                                    OptimizerState& opt, double lr, double weight_decay, double omega,
                                    const AdapterStack* anchor_stack) {
  TransitionGradients tg = transition_gradients(stack, BranchId::Trans, data, batch, omega, false, anchor_stack);
  LossBreakdown lb;
  lb.skipped_degenerate = tg.degenerate;
  if (tg.valid == 0) return lb;  // counted no-op
  check_mask(stack, PassId::TransitionPass, tg.grads);
  apply_updates(stack, tg.grads, opt, lr, weight_decay);
  lb.l_fwd = tg.l_fwd;
  lb.l_rev = tg.l_rev;
  lb.l_trans = tg.l_fwd + tg.l_rev;
  return lb;
}

namespace {

LossBreakdown train_step_joint(AdapterStack& stack, const TrainingData& data, const Batch& batch,
                               OptimizerState& opt, double lr, double weight_decay, double omega, double lambda,
                               bool pcgrad) {
  EndpointGradients eg = endpoint_gradients(stack, BranchId::End, data, batch);
  TransitionGradients tg = transition_gradients(stack, BranchId::End, data, batch, omega, true);
  ParamGrads total = std::move(eg.grads);
  if (tg.valid > 0) {
    for (std::size_t l = 0; l < stack.text.size(); ++l) {
      const std::string kb = text_key(l, "basis");
      const std::string ka = text_key(l, "coeff_end");
      Matrix& eb = total.at(kb);
      Matrix& ea = total.at(ka);
      const Matrix tb = scaled(tg.grads.at(kb), lambda);
      const Matrix ta = scaled(tg.grads.at(ka), lambda);
      if (!pcgrad) {
        add_scaled_inplace(eb, 1.0, tb);
        add_scaled_inplace(ea, 1.0, ta);
        continue;
      }
      Vector ge(eb.values().begin(), eb.values().end());
      ge.insert(ge.end(), ea.values().begin(), ea.values().end());
      Vector gt(tb.values().begin(), tb.values().end());
      gt.insert(gt.end(), ta.values().begin(), ta.values().end());
      const Vector combined = pcgrad_combine(ge, gt);
      std::copy(combined.begin(), combined.begin() + static_cast<std::ptrdiff_t>(eb.size()), eb.values().begin());
      std::copy(combined.begin() + static_cast<std::ptrdiff_t>(eb.size()), combined.end(), ea.values().begin());
    }
  }
  check_mask(stack, PassId::JointPass, total);
  apply_updates(stack, total, opt, lr, weight_decay);
  LossBreakdown lb;
  lb.l_end = eg.loss;
  lb.l_fwd = tg.l_fwd;
  lb.l_rev = tg.l_rev;
  lb.l_trans = tg.l_fwd + tg.l_rev;
  lb.skipped_degenerate = tg.degenerate;
  return lb;
}

}  // namespace

TrainResult run_training(const TrainConfig& config, const TrainingData& data, const AdapterStack& pretrained) {
  config.validate();
  TrainResult res{pretrained, {}};
  AdapterStack& s = res.stack;
  OptimizerState opt;
  res.log.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    const double lr = learning_rate_at(config, step);
    const Batch batch = make_batch(data, config.batch_size, config.feature_noise, config.seed, step);
    LossBreakdown lb;
    switch (config.mode) {
      case TrainMode::EndpointOnly:
        lb = train_step_endpoint(s, data, batch, opt, lr, config.weight_decay);
        break;
      case TrainMode::TransitionOnly:
        lb = train_step_transition(s, data, batch, opt, lr, config.weight_decay, config.omega);
        break;
      case TrainMode::Decoupled: {
        std::optional<AdapterStack> before;
        if (config.transition_uses_pre_step_weights) before = s;
        const LossBreakdown le = train_step_endpoint(s, data, batch, opt, lr, config.weight_decay);
        lb = train_step_transition(s, data, batch, opt, lr, config.weight_decay, config.omega,
                                   before ? &*before : nullptr);
        lb.l_end = le.l_end;
        break;
      }
      case TrainMode::JointShared:
      case TrainMode::JointPCGrad:
        lb = train_step_joint(s, data, batch, opt, lr, config.weight_decay, config.omega, config.lambda_trans,
                              config.mode == TrainMode::JointPCGrad);
        break;
    }
    res.log.push_back({step, lb.l_end, lb.l_fwd, lb.l_rev, lr, s.tau(), lb.skipped_degenerate});
  }
  return res;
}

void write_training_log(const std::vector<StepLog>& log, const std::filesystem::path& path,
                        const std::string& config_hash) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  if (!config_hash.empty()) f << "# config_hash=" << config_hash << "\n";
  f << "step,l_end,l_fwd,l_rev,lr,tau,degenerate_count\n";
  char buf[256];
  for (const StepLog& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", e.step, e.l_end, e.l_fwd, e.l_rev,
                  e.lr, e.tau, e.degenerate_count);
    f << buf;
  }
}

// ---------------------------------------------------------------------------

void PretrainConfig::validate() const {
  if (steps < 1) throw Error(ErrorCode::ConfigInvalid, "pretrain.steps must be >= 1");
  if (batch_size < 2) throw Error(ErrorCode::ConfigInvalid, "pretrain.batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::ConfigInvalid, "pretrain.learning_rate must be > 0");
  if (!(feature_noise >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "pretrain.feature_noise must be >= 0");
}

EndpointGradients pretrain_gradients(const AdapterStack& stack, const Vocab& vocab, const AttributeSchema& schema,
                                     const PretrainBatch& batch) {
  const TowerWeights w = stack.view(BranchId::End);
  const std::size_t n = batch.items.size();
  const std::vector<int> prompt = vocab.encode(source_prompt());
  std::vector<VisualTrace> vis(n);
  std::vector<MappingTrace> maps(n);
  std::vector<TextTrace> cap(n), img(n);
  std::vector<Vector> vs(n);
  for (std::size_t i = 0; i < n; ++i) {
    vis[i] = visual_forward(w, batch.features[i]);
    vs[i] = vis[i].out;
    maps[i] = mapping_forward(w, vis[i].out);
    cap[i] = text_forward(w, vocab.encode(render_caption(schema, batch.items[i])), nullptr);
    img[i] = text_forward(w, prompt, &maps[i].out);
  }
  const EndpointLoss l1 = endpoint_loss(rows_of(cap), vs, w.log_tau);
  const EndpointLoss l2 = endpoint_loss(rows_of(img), vs, w.log_tau);

  TowerGrads g = TowerGrads::zeros_like(w, true);
  for (std::size_t i = 0; i < n; ++i) {
    text_backward(w, cap[i], l1.grad_queries[i], g);
    const Vector g_pseudo = text_backward(w, img[i], l2.grad_queries[i], g);
    Vector g_vis = mapping_backward(w, maps[i], g_pseudo, g);
    axpy(1.0, l1.grad_targets[i], g_vis);
    axpy(1.0, l2.grad_targets[i], g_vis);
    visual_backward(w, vis[i], g_vis, g);
  }
  EndpointGradients out;
  out.loss = l1.loss + l2.loss;
  out.grads["token_embedding"] = std::move(g.token_embedding);
  out.grads["position_embedding"] = std::move(g.position_embedding);
  for (std::size_t l = 0; l < g.text.size(); ++l) out.grads[text_key(l, "base")] = std::move(g.text[l]);
  out.grads["visual.base"] = std::move(g.visual);
  out.grads["mapping.w1"] = std::move(g.mapping.w1);
  out.grads["mapping.w2"] = std::move(g.mapping.w2);
  out.grads["mapping.w3"] = std::move(g.mapping.w3);
  return out;
}

double caption_retrieval_r_at_1(const AdapterStack& stack, const AttributeSchema& schema,
                                const std::vector<Item>& items, double noise, Rng& rng) {
  if (items.empty()) return 0.0;
  const Vocab vocab(schema);
  const TowerWeights w = stack.view(BranchId::End);
  std::vector<Vector> gallery;
  gallery.reserve(items.size());
  for (const Item& it : items) gallery.push_back(encode_visual(w, visual_feature(schema, it, noise, rng)));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Vector q = encode_text(w, vocab.encode(render_caption(schema, items[i])));
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t j = 0; j < gallery.size(); ++j) {
      const double s = dot(q, gallery[j]);
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(items.size());
}

PretrainResult pretrain_base(const AdapterStack& init, const AttributeSchema& schema, const PretrainConfig& config) {
  config.validate();
  const std::uint64_t combos = schema.combinations();
  if (config.holdout + config.batch_size > combos)
    throw Error(ErrorCode::WorldTooSmall, "schema too small for pretraining holdout plus batch");
  const Vocab vocab(schema);
  const Rng root(config.seed);
  PretrainResult res{init, {}, {}, 0.0};
  std::set<std::array<std::size_t, kNumAttributes>> held;
  if (config.holdout > 0) {
    Rng hold_rng = root.split("holdout");
    res.holdout = gen_items(schema, config.holdout, hold_rng);
    for (const Item& it : res.holdout) held.insert(it.values);
  }

  TrainConfig schedule;
  schedule.steps = config.steps;
  schedule.learning_rate = config.learning_rate;
  schedule.warmup_steps = config.steps / 10;
  OptimizerState opt;
  AdapterStack& s = res.stack;
  res.losses.reserve(config.steps);
  for (std::size_t step = 0; step < config.steps; ++step) {
    Rng brng = root.split("batch").split(step);
    PretrainBatch batch;
    std::set<std::array<std::size_t, kNumAttributes>> seen;
    while (batch.items.size() < config.batch_size) {
      Item it = item_from_index(schema, brng.uniform_int(combos), static_cast<int>(batch.items.size()));
      if (held.count(it.values) != 0 || !seen.insert(it.values).second) continue;
      batch.items.push_back(it);
    }
    for (const Item& it : batch.items) batch.features.push_back(visual_feature(schema, it, config.feature_noise, brng));
    EndpointGradients eg = pretrain_gradients(s, vocab, schema, batch);
    res.losses.push_back(eg.loss);
    apply_updates(s, eg.grads, opt, learning_rate_at(schedule, step), 0.0);
  }
  for (LoraLayer& layer : s.text) {
    layer.coeff_end.fill(0.0);
    layer.coeff_trans.fill(0.0);
  }
  s.visual.coeff.fill(0.0);
  Rng eval_rng = root.split("holdout-eval");
  res.holdout_r_at_1 = caption_retrieval_r_at_1(s, schema, res.holdout, config.feature_noise, eval_rng);
  return res;
}

}  // namespace lrdm
