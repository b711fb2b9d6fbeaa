// Copyright 2026 The lrdm-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "lrdm/adapters.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace lrdm {

void AdapterConfig::validate() const {
  if (rank < 1) throw Error(ErrorCode::ConfigInvalid, "LoRA rank must be >= 1");
  if (!(lora_alpha > 0.0)) throw Error(ErrorCode::ConfigInvalid, "lora_alpha must be > 0");
}

namespace {

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = stddev * rng.gaussian();
  return m;
}

std::string text_name(std::size_t l, const char* field) { return "text." + std::to_string(l) + "." + field; }

}  // namespace

AdapterStack init_adapters(const EncoderConfig& encoder, const AdapterConfig& adapter, Rng& rng) {
  encoder.validate();
  adapter.validate();
  const std::size_t d = encoder.d_model;
  const std::size_t r = adapter.rank;
  const double basis_std = std::sqrt(1.0 / static_cast<double>(r));
  const double weight_std = std::sqrt(1.0 / static_cast<double>(d));

  Rng towers = rng.split("towers");
  Rng bases = rng.split("lora-basis");

  AdapterStack s;
  s.encoder = encoder;
  s.adapter = adapter;
  s.seed = rng.seed();
  s.token_embedding = gaussian_matrix(encoder.vocab_size, d, 0.5, towers);
  s.position_embedding = gaussian_matrix(encoder.max_len, d, 0.5, towers);
  for (std::size_t l = 0; l <= encoder.n_blocks; ++l) {
    LoraLayer layer;
    layer.base = gaussian_matrix(d, d, weight_std, towers);
    layer.basis = gaussian_matrix(d, r, basis_std, bases);
    layer.coeff_end = Matrix(r, d);
    layer.coeff_trans = Matrix(r, d);
    layer.scale = adapter.scale();
    s.text.push_back(std::move(layer));
  }
  s.visual.base = gaussian_matrix(d, encoder.d_visual_in, std::sqrt(1.0 / static_cast<double>(encoder.d_visual_in)),
                                  towers);
  s.visual.basis = gaussian_matrix(d, r, basis_std, bases);
  s.visual.coeff = Matrix(r, encoder.d_visual_in);
  s.visual.scale = adapter.scale();
  s.mapping.w1 = gaussian_matrix(d, d, weight_std, towers);
  s.mapping.w2 = gaussian_matrix(d, d, weight_std, towers);
  s.mapping.w3 = gaussian_matrix(d, d, weight_std, towers);
  s.log_tau(0, 0) = std::log(1.0 / 0.07);
  return s;
}

Matrix delta_weight(const LoraLayer& layer, BranchId branch) {
  return scaled(matmul(layer.basis, layer.coeff(branch)), layer.scale);
}

Matrix effective_weight(const LoraLayer& layer, BranchId branch) {
  Matrix w = layer.base;
  add_scaled_inplace(w, layer.scale, matmul(layer.basis, layer.coeff(branch)));
  return w;
}

Matrix effective_weight(const VisualLora& layer) {
  Matrix w = layer.base;
  add_scaled_inplace(w, layer.scale, matmul(layer.basis, layer.coeff));
  return w;
}

TowerWeights AdapterStack::view(BranchId branch) const {
  TowerWeights w;
  w.config = encoder;
  w.token_embedding = token_embedding;
  w.position_embedding = position_embedding;
  w.text.reserve(text.size());
  for (const auto& layer : text) w.text.push_back(effective_weight(layer, branch));
  w.visual = effective_weight(visual);
  w.mapping = mapping;
  w.log_tau = log_tau(0, 0);
  return w;
}

void AdapterStack::for_each_tensor(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("token_embedding", token_embedding);
  fn("position_embedding", position_embedding);
  for (std::size_t l = 0; l < text.size(); ++l) {
    fn(text_name(l, "base"), text[l].base);
    fn(text_name(l, "basis"), text[l].basis);
    fn(text_name(l, "coeff_end"), text[l].coeff_end);
    fn(text_name(l, "coeff_trans"), text[l].coeff_trans);
  }
  fn("visual.base", visual.base);
  fn("visual.basis", visual.basis);
  fn("visual.coeff", visual.coeff);
  fn("mapping.w1", mapping.w1);
  fn("mapping.w2", mapping.w2);
  fn("mapping.w3", mapping.w3);
  fn("log_tau", log_tau);
}

void AdapterStack::for_each_tensor(const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<AdapterStack*>(this)->for_each_tensor(
      [&](const std::string& name, Matrix& m) { fn(name, static_cast<const Matrix&>(m)); });
}

Matrix* AdapterStack::find(const std::string& name) {
  Matrix* found = nullptr;
  for_each_tensor([&](const std::string& n, Matrix& m) {
    if (n == name) found = &m;
  });
  return found;
}

std::vector<std::string> trainable_mask(const AdapterStack& stack, PassId pass) {
  std::vector<std::string> names;
  if (pass == PassId::TransitionPass) {
    for (std::size_t l = 0; l < stack.text.size(); ++l) names.push_back(text_name(l, "coeff_trans"));
    return names;
  }
  // EndpointPass and JointPass share the endpoint set; in joint training
  // coeff_end is the single shared coefficient set.
  for (std::size_t l = 0; l < stack.text.size(); ++l) {
    names.push_back(text_name(l, "basis"));
    names.push_back(text_name(l, "coeff_end"));
  }
  names.insert(names.end(), {"visual.basis", "visual.coeff", "mapping.w1", "mapping.w2", "mapping.w3", "log_tau"});
  return names;
}

void lora_factor_grads(const Matrix& basis, const Matrix& coeff, double scale, const Matrix& grad_weight,
                       Matrix& grad_basis, Matrix& grad_coeff) {
  grad_coeff = scaled(matmul_transpose_a(basis, grad_weight), scale);
  grad_basis = scaled(matmul_transpose_b(grad_weight, coeff), scale);
}

// ---------------------------------------------------------------------------
// Binary tensor files

namespace {

constexpr char kMagic[4] = {'D', 'C', 'I', 'R'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::CorruptTensor, "unexpected end of checkpoint");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out(kMagic, 4);
  put_u32(out, ckpt.version);
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, 2);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader in(bytes);
  if (in.str(4) != std::string(kMagic, 4)) throw Error(ErrorCode::CorruptTensor, "bad magic in " + path.string());
  Checkpoint ckpt;
  ckpt.version = in.u32();
  if (ckpt.version != kCheckpointVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "checkpoint version " + std::to_string(ckpt.version));
  }
  const std::uint32_t count = in.u32();
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name = in.str(in.u32());
    const std::uint32_t ndim = in.u32();
    if (ndim == 0 || ndim > 2) throw Error(ErrorCode::CorruptTensor, name + ": ndim " + std::to_string(ndim));
    std::uint64_t rows = 1, cols = in.u32();
    if (ndim == 2) {
      rows = cols;
      cols = in.u32();
    }
    if (rows * cols > in.remaining() / 8) throw Error(ErrorCode::CorruptTensor, name + ": value count exceeds file");
    if (ckpt.find(name) != nullptr) throw Error(ErrorCode::CorruptTensor, "duplicate tensor " + name);
    std::vector<double> values(rows * cols);
    for (double& v : values) v = in.f64();
    ckpt.tensors.emplace_back(name, Matrix(rows, cols, std::move(values)));
  }
  if (!in.at_end()) throw Error(ErrorCode::CorruptTensor, "trailing bytes in " + path.string());
  return ckpt;
}

namespace {

constexpr double kKindStack = 0.0;
constexpr double kKindTower = 1.0;

Matrix config_tensor(const EncoderConfig& e, const AdapterConfig& a) {
  return Matrix(1, 7,
                {static_cast<double>(e.d_model), static_cast<double>(e.n_blocks), static_cast<double>(e.max_len),
                 static_cast<double>(e.d_visual_in), static_cast<double>(e.vocab_size), static_cast<double>(a.rank),
                 a.lora_alpha});
}

void read_config(const Checkpoint& ckpt, EncoderConfig& e, AdapterConfig& a) {
  const Matrix* c = ckpt.find("meta.config");
  if (c == nullptr || c->size() != 7) throw Error(ErrorCode::CorruptTensor, "missing meta.config");
  const auto v = c->values();
  e.d_model = static_cast<std::size_t>(v[0]);
  e.n_blocks = static_cast<std::size_t>(v[1]);
  e.max_len = static_cast<std::size_t>(v[2]);
  e.d_visual_in = static_cast<std::size_t>(v[3]);
  e.vocab_size = static_cast<std::size_t>(v[4]);
  a.rank = static_cast<std::size_t>(v[5]);
  a.lora_alpha = v[6];
}

Matrix hash_tensor(const std::string& hex) {
  const std::uint64_t h = std::stoull(hex, nullptr, 16);
  return Matrix(1, 2, {static_cast<double>(h >> 32), static_cast<double>(h & 0xFFFFFFFFULL)});
}

void add_meta(Checkpoint& ckpt, double kind, const EncoderConfig& e, const AdapterConfig& a, std::uint64_t seed,
              const std::string& config_hash) {
  ckpt.tensors.emplace_back("meta.kind", Matrix(1, 1, {kind}));
  ckpt.tensors.emplace_back("meta.config", config_tensor(e, a));
  ckpt.tensors.emplace_back("meta.seed",
                            Matrix(1, 2, {static_cast<double>(seed >> 32), static_cast<double>(seed & 0xFFFFFFFFULL)}));
  if (!config_hash.empty()) ckpt.tensors.emplace_back("meta.config_hash", hash_tensor(config_hash));
}

double read_kind(const Checkpoint& ckpt) {
  const Matrix* k = ckpt.find("meta.kind");
  if (k == nullptr || k->size() != 1) throw Error(ErrorCode::CorruptTensor, "missing meta.kind");
  return k->values()[0];
}

void assign(Matrix& dst, const Checkpoint& ckpt, const std::string& name, std::size_t rows, std::size_t cols) {
  const Matrix* src = ckpt.find(name);
  if (src == nullptr) throw Error(ErrorCode::CorruptTensor, "missing tensor " + name);
  if (src->rows() != rows || src->cols() != cols) {
    throw Error(ErrorCode::CorruptTensor, name + ": shape " + std::to_string(src->rows()) + "x" +
                                              std::to_string(src->cols()) + ", expected " + std::to_string(rows) +
                                              "x" + std::to_string(cols));
  }
  dst = *src;
}

}  // namespace

void save_checkpoint(const AdapterStack& stack, const std::filesystem::path& path, const std::string& config_hash) {
  Checkpoint ckpt;
  add_meta(ckpt, kKindStack, stack.encoder, stack.adapter, stack.seed, config_hash);
  stack.for_each_tensor([&](const std::string& name, const Matrix& m) { ckpt.tensors.emplace_back(name, m); });
  write_checkpoint(ckpt, path);
}

AdapterStack load_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (read_kind(ckpt) != kKindStack) throw Error(ErrorCode::CorruptTensor, "not an adapter-stack checkpoint");
  EncoderConfig e;
  AdapterConfig a;
  read_config(ckpt, e, a);
  Rng dummy(0);
  AdapterStack s = init_adapters(e, a, dummy);
  const Matrix* seed = ckpt.find("meta.seed");
  if (seed == nullptr || seed->size() != 2) throw Error(ErrorCode::CorruptTensor, "missing meta.seed");
  s.seed = (static_cast<std::uint64_t>(seed->values()[0]) << 32) | static_cast<std::uint64_t>(seed->values()[1]);
  s.for_each_tensor([&](const std::string& name, Matrix& m) { assign(m, ckpt, name, m.rows(), m.cols()); });
  for (const auto& [name, m] : ckpt.tensors) {
    (void)m;
    if (name.rfind("meta.", 0) != 0 && s.find(name) == nullptr)
      throw Error(ErrorCode::CorruptTensor, "unexpected tensor " + name);
  }
  return s;
}

void save_tower_checkpoint(const TowerWeights& w, const std::filesystem::path& path, const std::string& config_hash) {
  Checkpoint ckpt;
  add_meta(ckpt, kKindTower, w.config, AdapterConfig{}, 0, config_hash);
  ckpt.tensors.emplace_back("token_embedding", w.token_embedding);
  ckpt.tensors.emplace_back("position_embedding", w.position_embedding);
  for (std::size_t l = 0; l < w.text.size(); ++l) ckpt.tensors.emplace_back(text_name(l, "weight"), w.text[l]);
  ckpt.tensors.emplace_back("visual.weight", w.visual);
  ckpt.tensors.emplace_back("mapping.w1", w.mapping.w1);
  ckpt.tensors.emplace_back("mapping.w2", w.mapping.w2);
  ckpt.tensors.emplace_back("mapping.w3", w.mapping.w3);
  ckpt.tensors.emplace_back("log_tau", Matrix(1, 1, {w.log_tau}));
  write_checkpoint(ckpt, path);
}

TowerWeights load_tower_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (read_kind(ckpt) != kKindTower) throw Error(ErrorCode::CorruptTensor, "not a folded-tower checkpoint");
  TowerWeights w;
  AdapterConfig unused;
  read_config(ckpt, w.config, unused);
  const std::size_t d = w.config.d_model;
  assign(w.token_embedding, ckpt, "token_embedding", w.config.vocab_size, d);
  assign(w.position_embedding, ckpt, "position_embedding", w.config.max_len, d);
  w.text.resize(w.config.n_blocks + 1);
  for (std::size_t l = 0; l < w.text.size(); ++l) assign(w.text[l], ckpt, text_name(l, "weight"), d, d);
  assign(w.visual, ckpt, "visual.weight", d, w.config.d_visual_in);
  assign(w.mapping.w1, ckpt, "mapping.w1", d, d);
  assign(w.mapping.w2, ckpt, "mapping.w2", d, d);
  assign(w.mapping.w3, ckpt, "mapping.w3", d, d);
  Matrix tau;
  assign(tau, ckpt, "log_tau", 1, 1);
  w.log_tau = tau(0, 0);
  return w;
}

std::string checkpoint_config_hash(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  const Matrix* h = ckpt.find("meta.config_hash");
  if (h == nullptr || h->size() != 2) return "";
  const std::uint64_t v =
      (static_cast<std::uint64_t>(h->values()[0]) << 32) | static_cast<std::uint64_t>(h->values()[1]);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace lrdm
