#pragma once

// GPT-style pre-norm decoder whose per-token, per-layer residual-stream
// pieces can be recorded, replaced, noised, and frozen.
//
// Layer numbering is 1-based (layer l is the output of block l); hidden
// layer 0 is the embedding output. Token positions are 0-based.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "plaus/label.hpp"
#include "plaus/numeric/tensor.hpp"

namespace plaus {

struct TransformerConfig {
  int n_layers = 4;
  int d_model = 32;
  int n_heads = 4;
  int d_mlp = 128;
  int vocab_size = 0;
  int max_seq = 16;
  bool pre_norm = true;

  // Throws ConfigError on a violated invariant.
  void validate() const;
  bool operator==(const TransformerConfig&) const = default;
};

enum class Site { hidden, attn_out, mlp_out };
std::string_view to_string(Site s);
Site parse_site(std::string_view s);

// Full grid of residual-stream activations from one forward pass.
// Invariant: hidden(i, l) == hidden(i, l-1) + attn(i, l) + mlp(i, l).
class ActivationTrace {
 public:
  ActivationTrace() = default;
  ActivationTrace(std::size_t n_tokens, int n_layers, int d_model, int d_mlp);

  std::size_t n_tokens() const { return n_tokens_; }
  int n_layers() const { return n_layers_; }
  int d_model() const { return d_model_; }

  // layer in [0, L]
  std::span<const double> hidden(std::size_t token, int layer) const;
  // layer in [1, L]
  std::span<const double> attn(std::size_t token, int layer) const;
  std::span<const double> mlp(std::size_t token, int layer) const;
  // Input of the MLP output projection (post-activation), layer in [1, L].
  std::span<const double> key(std::size_t token, int layer) const;
  std::span<const double> site(Site s, std::size_t token, int layer) const;

  std::span<double> hidden_mut(std::size_t token, int layer);
  std::span<double> attn_mut(std::size_t token, int layer);
  std::span<double> mlp_mut(std::size_t token, int layer);
  std::span<double> key_mut(std::size_t token, int layer);

 private:
  std::size_t n_tokens_ = 0;
  int n_layers_ = 0;
  int d_model_ = 0;
  int d_mlp_ = 0;
  std::vector<double> hidden_, attn_, mlp_, keys_;
};

// Gaussian corruption of a token span's embeddings with a fixed sample.
struct EmbeddingNoise {
  std::size_t begin = 0;  // token span [begin, end)
  std::size_t end = 0;
  std::vector<double> eps;  // (end - begin) * d_model values, already scaled
};

// Replace the value of `site` at (token, layer) before it propagates.
struct SitePatch {
  std::size_t token = 0;
  int layer = 1;
  Site site = Site::hidden;
  std::vector<double> value;
};

struct InterventionSpec {
  std::optional<EmbeddingNoise> noise;
  std::vector<SitePatch> patches;
  // Frozen attn_out / mlp_out values; applied like patches but only for the
  // two sub-layer sites.
  std::vector<SitePatch> severs;

  bool empty() const { return !noise && patches.empty() && severs.empty(); }
  // Throws ContractError on out-of-range indices, bad sites, or a
  // (token, layer, site) used twice.
  void validate(std::size_t n_tokens, int n_layers, int d_model) const;
};

// Differentiable offset added to hidden(token, layer) during the pass.
struct HiddenDelta {
  std::size_t token = 0;
  int layer = 1;
  Tensor delta;  // [1, d_model]
};

struct ForwardOptions {
  const InterventionSpec* intervention = nullptr;
  const HiddenDelta* delta = nullptr;
  ActivationTrace* trace = nullptr;
  // Only compute logits for the final position ([1, V] instead of [T, V]).
  bool final_only = false;
};

struct BlockWeights {
  Tensor ln1_g, ln1_b;
  Tensor w_qkv, b_qkv;  // [d, 3d], [3d]
  Tensor w_o, b_o;      // [d, d], [d]
  Tensor ln2_g, ln2_b;
  Tensor w_in, b_in;    // [d, d_mlp], [d_mlp]
  Tensor w_out, b_out;  // [d_mlp, d], [d]
};

struct LabelReadout {
  Label label = Label::False;
  double p_true = 0.5;
  double p_false = 0.5;
  double p(Label l) const { return l == Label::True ? p_true : p_false; }
};

// Two-way renormalized readout of one logits row. Exact ties go to False.
LabelReadout label_from_logits(std::span<const double> logits_row, const LabelIds& ids);

class Transformer {
 public:
  Transformer() = default;
  // GPT-2 style initialization, deterministic under `seed`.
  Transformer(const TransformerConfig& cfg, std::uint64_t seed);
  // Zero-initialized weights (used by the checkpoint loader).
  static Transformer zeros(const TransformerConfig& cfg);

  const TransformerConfig& config() const { return cfg_; }

  // Logits [T, V] (or [1, V] with final_only).
  Tensor forward(std::span<const int> tokens, const ForwardOptions& opts = {}) const;

  // Clean pass that records every activation.
  std::pair<Tensor, ActivationTrace> forward_traced(std::span<const int> tokens) const;
  // Final-position logits of a pass under `spec`.
  std::vector<double> forward_intervened(std::span<const int> tokens,
                                         const InterventionSpec& spec) const;

  LabelReadout predict(std::span<const int> tokens, const LabelIds& ids) const;

  // Parameters in a fixed order with stable names.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void set_trainable(bool on);

  BlockWeights& block(int layer) { return blocks_.at(static_cast<std::size_t>(layer - 1)); }
  const BlockWeights& block(int layer) const {
    return blocks_.at(static_cast<std::size_t>(layer - 1));
  }
  Tensor& token_embedding() { return wte_; }
  const Tensor& token_embedding() const { return wte_; }
  Tensor& unembedding() { return lm_head_; }

  Transformer clone() const;
  // Copy values from `other` (same config) into this model's tensors.
  void assign_from(const Transformer& other);
  bool same_weights(const Transformer& other) const;

 private:
  TransformerConfig cfg_;
  Tensor wte_, wpe_;
  std::vector<BlockWeights> blocks_;
  Tensor lnf_g_, lnf_b_;
  Tensor lm_head_;  // [d, V]
};

}  // namespace plaus
