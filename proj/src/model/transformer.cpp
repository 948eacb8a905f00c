#include "plaus/model/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <random>
#include <set>
#include <tuple>

#include "plaus/errors.hpp"
#include "plaus/numeric/ops.hpp"

namespace plaus {

void TransformerConfig::validate() const {
  if (n_layers < 2) throw ConfigError("n_layers must be >= 2, got " + std::to_string(n_layers));
  if (d_model <= 0 || n_heads <= 0 || d_mlp <= 0 || max_seq <= 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
  if (!pre_norm) throw ConfigError("only pre-norm blocks are supported");
}

std::string_view to_string(Site s) {
  switch (s) {
    case Site::hidden: return "hidden";
    case Site::attn_out: return "attn_out";
    case Site::mlp_out: return "mlp_out";
  }
  return "?";
}

Site parse_site(std::string_view s) {
  if (s == "hidden") return Site::hidden;
  if (s == "attn_out" || s == "attn") return Site::attn_out;
  if (s == "mlp_out" || s == "mlp") return Site::mlp_out;
  throw ConfigError("unknown site '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// ActivationTrace

ActivationTrace::ActivationTrace(std::size_t n_tokens, int n_layers, int d_model, int d_mlp)
    : n_tokens_(n_tokens), n_layers_(n_layers), d_model_(d_model), d_mlp_(d_mlp) {
  const auto t = n_tokens, l = static_cast<std::size_t>(n_layers);
  const auto d = static_cast<std::size_t>(d_model), f = static_cast<std::size_t>(d_mlp);
  hidden_.assign((l + 1) * t * d, 0.0);
  attn_.assign(l * t * d, 0.0);
  mlp_.assign(l * t * d, 0.0);
  keys_.assign(l * t * f, 0.0);
}

namespace {
void check_cell(std::size_t token, int layer, std::size_t n_tokens, int lo, int hi) {
  if (token >= n_tokens || layer < lo || layer > hi) {
    throw ContractError("activation index (token " + std::to_string(token) + ", layer " +
                        std::to_string(layer) + ") out of range");
  }
}
}  // namespace

std::span<const double> ActivationTrace::hidden(std::size_t token, int layer) const {
  check_cell(token, layer, n_tokens_, 0, n_layers_);
  const auto d = static_cast<std::size_t>(d_model_);
  return {hidden_.data() + (static_cast<std::size_t>(layer) * n_tokens_ + token) * d, d};
}

std::span<const double> ActivationTrace::attn(std::size_t token, int layer) const {
  check_cell(token, layer, n_tokens_, 1, n_layers_);
  const auto d = static_cast<std::size_t>(d_model_);
  return {attn_.data() + (static_cast<std::size_t>(layer - 1) * n_tokens_ + token) * d, d};
}

std::span<const double> ActivationTrace::mlp(std::size_t token, int layer) const {
  check_cell(token, layer, n_tokens_, 1, n_layers_);
  const auto d = static_cast<std::size_t>(d_model_);
  return {mlp_.data() + (static_cast<std::size_t>(layer - 1) * n_tokens_ + token) * d, d};
}

std::span<const double> ActivationTrace::key(std::size_t token, int layer) const {
  check_cell(token, layer, n_tokens_, 1, n_layers_);
  const auto f = static_cast<std::size_t>(d_mlp_);
  return {keys_.data() + (static_cast<std::size_t>(layer - 1) * n_tokens_ + token) * f, f};
}

std::span<const double> ActivationTrace::site(Site s, std::size_t token, int layer) const {
  switch (s) {
    case Site::hidden: return hidden(token, layer);
    case Site::attn_out: return attn(token, layer);
    case Site::mlp_out: return mlp(token, layer);
  }
  return {};
}

std::span<double> ActivationTrace::hidden_mut(std::size_t token, int layer) {
  auto s = std::as_const(*this).hidden(token, layer);
  return {const_cast<double*>(s.data()), s.size()};
}
std::span<double> ActivationTrace::attn_mut(std::size_t token, int layer) {
  auto s = std::as_const(*this).attn(token, layer);
  return {const_cast<double*>(s.data()), s.size()};
}
std::span<double> ActivationTrace::mlp_mut(std::size_t token, int layer) {
  auto s = std::as_const(*this).mlp(token, layer);
  return {const_cast<double*>(s.data()), s.size()};
}
std::span<double> ActivationTrace::key_mut(std::size_t token, int layer) {
  auto s = std::as_const(*this).key(token, layer);
  return {const_cast<double*>(s.data()), s.size()};
}

// ---------------------------------------------------------------------------
// InterventionSpec

void InterventionSpec::validate(std::size_t n_tokens, int n_layers, int d_model) const {
  const auto d = static_cast<std::size_t>(d_model);
  if (noise) {
    if (noise->begin >= noise->end || noise->end > n_tokens) {
      throw ContractError("noise span [" + std::to_string(noise->begin) + ", " +
                          std::to_string(noise->end) + ") outside sequence of " +
                          std::to_string(n_tokens));
    }
    if (noise->eps.size() != (noise->end - noise->begin) * d) {
      throw ContractError("noise sample has " + std::to_string(noise->eps.size()) +
                          " values, expected " + std::to_string((noise->end - noise->begin) * d));
    }
  }
  std::set<std::tuple<std::size_t, int, int>> used;
  auto check = [&](const SitePatch& p, bool sever) {
    const int lo = p.site == Site::hidden ? 0 : 1;
    if (p.token >= n_tokens || p.layer < lo || p.layer > n_layers) {
      throw ContractError("intervention at (token " + std::to_string(p.token) + ", layer " +
                          std::to_string(p.layer) + ") out of range");
    }
    if (sever && p.site == Site::hidden) {
      throw ContractError("severing applies to attn_out or mlp_out, not hidden");
    }
    if (p.value.size() != d) {
      throw ContractError("intervention vector has " + std::to_string(p.value.size()) +
                          " entries, expected " + std::to_string(d));
    }
    if (!used.emplace(p.token, p.layer, static_cast<int>(p.site)).second) {
      throw ContractError("(token " + std::to_string(p.token) + ", layer " +
                          std::to_string(p.layer) + ", " + std::string(to_string(p.site)) +
                          ") is intervened on twice");
    }
  };
  for (const auto& p : patches) check(p, false);
  for (const auto& p : severs) check(p, true);
}

// ---------------------------------------------------------------------------
// Readout

LabelReadout label_from_logits(std::span<const double> row, const LabelIds& ids) {
  const auto n = static_cast<int>(row.size());
  if (ids.true_id < 0 || ids.false_id < 0 || ids.true_id >= n || ids.false_id >= n) {
    throw ConfigError("label tokens are missing from the vocabulary");
  }
  const double lt = row[static_cast<std::size_t>(ids.true_id)];
  const double lf = row[static_cast<std::size_t>(ids.false_id)];
  LabelReadout out;
  const double m = std::max(lt, lf);
  const double et = std::exp(lt - m), ef = std::exp(lf - m);
  out.p_true = et / (et + ef);
  out.p_false = ef / (et + ef);
  out.label = lt > lf ? Label::True : Label::False;
  return out;
}

// ---------------------------------------------------------------------------
// Transformer

namespace {
Tensor normal_tensor(Shape shape, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor filled(Shape shape, double value) {
  std::vector<double> v(numel(shape), value);
  return Tensor::from(std::move(shape), std::move(v));
}

std::size_t sz(int v) { return static_cast<std::size_t>(v); }
}  // namespace

Transformer Transformer::zeros(const TransformerConfig& cfg) {
  cfg.validate();
  Transformer t;
  t.cfg_ = cfg;
  const auto d = sz(cfg.d_model), f = sz(cfg.d_mlp), v = sz(cfg.vocab_size), T = sz(cfg.max_seq);
  t.wte_ = Tensor::zeros({v, d});
  t.wpe_ = Tensor::zeros({T, d});
  for (int l = 0; l < cfg.n_layers; ++l) {
    BlockWeights b;
    b.ln1_g = Tensor::zeros({d});
    b.ln1_b = Tensor::zeros({d});
    b.w_qkv = Tensor::zeros({d, 3 * d});
    b.b_qkv = Tensor::zeros({3 * d});
    b.w_o = Tensor::zeros({d, d});
    b.b_o = Tensor::zeros({d});
    b.ln2_g = Tensor::zeros({d});
    b.ln2_b = Tensor::zeros({d});
    b.w_in = Tensor::zeros({d, f});
    b.b_in = Tensor::zeros({f});
    b.w_out = Tensor::zeros({f, d});
    b.b_out = Tensor::zeros({d});
    t.blocks_.push_back(std::move(b));
  }
  t.lnf_g_ = Tensor::zeros({d});
  t.lnf_b_ = Tensor::zeros({d});
  t.lm_head_ = Tensor::zeros({d, v});
  return t;
}

Transformer::Transformer(const TransformerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  cfg_ = cfg;
  std::mt19937_64 rng(seed);
  const auto d = sz(cfg.d_model), f = sz(cfg.d_mlp), v = sz(cfg.vocab_size), T = sz(cfg.max_seq);
  constexpr double kStd = 0.02;
  const double proj_std = kStd / std::sqrt(2.0 * cfg.n_layers);
  wte_ = normal_tensor({v, d}, kStd, rng);
  wpe_ = normal_tensor({T, d}, 0.01, rng);
  for (int l = 0; l < cfg.n_layers; ++l) {
    BlockWeights b;
    b.ln1_g = filled({d}, 1.0);
    b.ln1_b = filled({d}, 0.0);
    b.w_qkv = normal_tensor({d, 3 * d}, kStd, rng);
    b.b_qkv = filled({3 * d}, 0.0);
    b.w_o = normal_tensor({d, d}, proj_std, rng);
    b.b_o = filled({d}, 0.0);
    b.ln2_g = filled({d}, 1.0);
    b.ln2_b = filled({d}, 0.0);
    b.w_in = normal_tensor({d, f}, kStd, rng);
    b.b_in = filled({f}, 0.0);
    b.w_out = normal_tensor({f, d}, proj_std, rng);
    b.b_out = filled({d}, 0.0);
    blocks_.push_back(std::move(b));
  }
  lnf_g_ = filled({d}, 1.0);
  lnf_b_ = filled({d}, 0.0);
  lm_head_ = normal_tensor({d, v}, kStd, rng);
}

namespace {

// Applies every patch/sever on (layer, site) to the [T, d] activation `x`.
Tensor apply_site(Tensor x, const InterventionSpec* spec, int layer, Site site) {
  if (spec == nullptr) return x;
  for (const auto* list : {&spec->patches, &spec->severs}) {
    for (const auto& p : *list) {
      if (p.layer == layer && p.site == site) x = ops::replace_row(x, Tensor::row(p.value), p.token);
    }
  }
  return x;
}

void record_rows(const Tensor& x, std::size_t n_tokens, const std::function<std::span<double>(std::size_t)>& dst) {
  const std::size_t c = x.cols();
  const auto src = x.data();
  for (std::size_t i = 0; i < n_tokens; ++i) {
    auto out = dst(i);
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(i * c), c, out.begin());
  }
}

}  // namespace

Tensor Transformer::forward(std::span<const int> tokens, const ForwardOptions& opts) const {
  const std::size_t T = tokens.size();
  if (T == 0) throw ContractError("forward: empty token sequence");
  if (T > sz(cfg_.max_seq)) {
    throw ContractError("forward: sequence of " + std::to_string(T) + " exceeds max_seq " +
                        std::to_string(cfg_.max_seq));
  }
  for (int id : tokens) {
    if (id < 0 || id >= cfg_.vocab_size) {
      throw ContractError("forward: token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  const InterventionSpec* spec = opts.intervention;
  if (spec) spec->validate(T, cfg_.n_layers, cfg_.d_model);
  if (opts.delta) {
    if (opts.delta->token >= T || opts.delta->layer < 0 || opts.delta->layer > cfg_.n_layers) {
      throw ContractError("forward: hidden delta position out of range");
    }
  }
  ActivationTrace* trace = opts.trace;
  if (trace) *trace = ActivationTrace(T, cfg_.n_layers, cfg_.d_model, cfg_.d_mlp);

  const auto d = sz(cfg_.d_model);
  const auto n_heads = sz(cfg_.n_heads);
  const std::size_t dh = d / n_heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<int> positions(T);
  for (std::size_t i = 0; i < T; ++i) positions[i] = static_cast<int>(i);
  Tensor x = ops::add(ops::embedding(wte_, tokens), ops::embedding(wpe_, positions));
  if (spec && spec->noise) {
    const auto& nz = *spec->noise;
    std::vector<double> eps(T * d, 0.0);
    std::copy(nz.eps.begin(), nz.eps.end(), eps.begin() + static_cast<std::ptrdiff_t>(nz.begin * d));
    x = ops::add(x, Tensor::from({T, d}, std::move(eps)));
  }
  x = apply_site(x, spec, 0, Site::hidden);
  auto apply_delta = [&](Tensor h, int layer) {
    if (opts.delta && opts.delta->layer == layer) {
      h = ops::add_to_row(h, opts.delta->delta, opts.delta->token);
    }
    return h;
  };
  x = apply_delta(x, 0);
  if (trace) record_rows(x, T, [&](std::size_t i) { return trace->hidden_mut(i, 0); });

  for (int layer = 1; layer <= cfg_.n_layers; ++layer) {
    const BlockWeights& b = blocks_[sz(layer - 1)];

    const Tensor ln1 = ops::layernorm(x, b.ln1_g, b.ln1_b);
    const Tensor qkv = ops::add_bias(ops::matmul(ln1, b.w_qkv), b.b_qkv);
    std::vector<Tensor> heads;
    heads.reserve(n_heads);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const Tensor q = ops::slice_cols(qkv, h * dh, dh);
      const Tensor k = ops::slice_cols(qkv, d + h * dh, dh);
      const Tensor v = ops::slice_cols(qkv, 2 * d + h * dh, dh);
      const Tensor att = ops::causal_softmax_rows(ops::scale(ops::matmul(q, ops::transpose(k)), att_scale));
      heads.push_back(ops::matmul(att, v));
    }
    const Tensor merged = n_heads == 1 ? heads[0] : ops::concat_cols(heads);
    Tensor a = ops::add_bias(ops::matmul(merged, b.w_o), b.b_o);
    a = apply_site(a, spec, layer, Site::attn_out);
    const Tensor mid = ops::add(x, a);

    const Tensor ln2 = ops::layernorm(mid, b.ln2_g, b.ln2_b);
    const Tensor key = ops::gelu(ops::add_bias(ops::matmul(ln2, b.w_in), b.b_in));
    Tensor m = ops::add_bias(ops::matmul(key, b.w_out), b.b_out);
    m = apply_site(m, spec, layer, Site::mlp_out);
    x = ops::add(mid, m);
    x = apply_site(x, spec, layer, Site::hidden);
    x = apply_delta(x, layer);

    if (trace) {
      record_rows(a, T, [&](std::size_t i) { return trace->attn_mut(i, layer); });
      record_rows(m, T, [&](std::size_t i) { return trace->mlp_mut(i, layer); });
      record_rows(key, T, [&](std::size_t i) { return trace->key_mut(i, layer); });
      record_rows(x, T, [&](std::size_t i) { return trace->hidden_mut(i, layer); });
    }
  }

  Tensor xf = opts.final_only ? ops::select_row(x, T - 1) : x;
  xf = ops::layernorm(xf, lnf_g_, lnf_b_);
  return ops::matmul(xf, lm_head_);
}

std::pair<Tensor, ActivationTrace> Transformer::forward_traced(std::span<const int> tokens) const {
  ActivationTrace trace;
  ForwardOptions opts;
  opts.trace = &trace;
  Tensor logits = forward(tokens, opts);
  return {std::move(logits), std::move(trace)};
}

std::vector<double> Transformer::forward_intervened(std::span<const int> tokens,
                                                    const InterventionSpec& spec) const {
  ForwardOptions opts;
  opts.intervention = &spec;
  opts.final_only = true;
  return forward(tokens, opts).to_vector();
}

LabelReadout Transformer::predict(std::span<const int> tokens, const LabelIds& ids) const {
  ForwardOptions opts;
  opts.final_only = true;
  const Tensor logits = forward(tokens, opts);
  return label_from_logits(logits.data(), ids);
}

std::vector<std::pair<std::string, Tensor>> Transformer::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("wte", wte_);
  out.emplace_back("wpe", wpe_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto p = "blocks." + std::to_string(l + 1) + ".";
    const auto& b = blocks_[l];
    out.emplace_back(p + "ln1.g", b.ln1_g);
    out.emplace_back(p + "ln1.b", b.ln1_b);
    out.emplace_back(p + "attn.w_qkv", b.w_qkv);
    out.emplace_back(p + "attn.b_qkv", b.b_qkv);
    out.emplace_back(p + "attn.w_o", b.w_o);
    out.emplace_back(p + "attn.b_o", b.b_o);
    out.emplace_back(p + "ln2.g", b.ln2_g);
    out.emplace_back(p + "ln2.b", b.ln2_b);
    out.emplace_back(p + "mlp.w_in", b.w_in);
    out.emplace_back(p + "mlp.b_in", b.b_in);
    out.emplace_back(p + "mlp.w_out", b.w_out);
    out.emplace_back(p + "mlp.b_out", b.b_out);
  }
  out.emplace_back("lnf.g", lnf_g_);
  out.emplace_back("lnf.b", lnf_b_);
  out.emplace_back("lm_head", lm_head_);
  return out;
}

std::vector<Tensor> Transformer::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Transformer::set_trainable(bool on) {
  for (auto& t : parameters()) {
    t.set_requires_grad(on);
    t.zero_grad();
  }
}

Transformer Transformer::clone() const {
  Transformer t = zeros(cfg_);
  t.assign_from(*this);
  return t;
}

void Transformer::assign_from(const Transformer& other) {
  if (!(other.cfg_ == cfg_)) throw ContractError("assign_from: model configs differ");
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto out = dst[i].mutable_data();
    const auto in = src[i].data();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

bool Transformer::same_weights(const Transformer& other) const {
  if (!(other.cfg_ == cfg_)) return false;
  auto a = parameters();
  auto b = other.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a[i].data(), y = b[i].data();
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace plaus
