#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plaus/corpus/statement.hpp"
#include "plaus/model/transformer.hpp"
#include "plaus/numeric/kernels.hpp"

namespace plaus {

struct CorruptionSpec {
  Role role = Role::subject;
  // Standard deviation of the Gaussian noise added to each embedding
  // coordinate of the role span. Zero disables the corruption.
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

// Three times the standard deviation of the token-embedding coordinates of
// every `role` token occurrence in `statements`.
double noise_scale(const Transformer& model, std::span<const SvoStatement> statements, Role role);

// The statement's shared noise for this role: span length x d_model values.
std::vector<double> corruption_noise(const SvoStatement& s, const CorruptionSpec& c, int d_model);

struct TraceRunResult {
  std::string id;
  std::size_t n_tokens = 0;
  Span subject, verb, object;
  Role role = Role::subject;
  double p_clean = 0.0;    // P[gold] in the clean run
  double p_corrupt = 0.0;  // P[gold] with the role span noised
  double te = 0.0;
  // ie[site][token][layer - 1]
  std::map<Site, std::vector<std::vector<double>>> ie;
  // Set for severed traces: the sub-layer that was frozen and the window.
  std::optional<Site> severed;
  int sever_window = -1;
  bool skipped = false;  // clean run mispredicted; nothing traced
};

struct TraceOptions {
  std::vector<Site> sites = {Site::hidden, Site::attn_out, Site::mlp_out};
  // Trace even when the clean prediction is wrong (used for post-edit
  // comparisons); normally such statements are skipped.
  bool require_correct = true;
  kernels::Exec exec = kernels::default_exec();
};

TraceRunResult trace_statement(const Transformer& model, const SvoStatement& s, const LabelIds& ids,
                               const CorruptionSpec& corruption, const TraceOptions& opts = {});

// Restores hidden states while freezing `sever_site` (attn_out or mlp_out) of
// the restored token at its corrupted value in the `window` layers after the
// restored one (-1: every later layer, 0: nothing frozen).
TraceRunResult trace_severed(const Transformer& model, const SvoStatement& s, const LabelIds& ids,
                             const CorruptionSpec& corruption, Site sever_site, int window = -1,
                             const TraceOptions& opts = {});

enum class TokenClass {
  first_subject,
  last_subject,
  first_verb,
  last_verb,
  first_object,
  last_object,
  further,
  last_token,
};
inline constexpr TokenClass kTokenClasses[] = {
    TokenClass::first_subject, TokenClass::last_subject, TokenClass::first_verb, TokenClass::last_verb,
    TokenClass::first_object,  TokenClass::last_object,  TokenClass::further,    TokenClass::last_token,
};
std::string_view to_string(TokenClass c);
TokenClass parse_token_class(std::string_view s);
// Last token of the role's span.
TokenClass last_of(Role r);
// Token positions of a class in a statement with these spans.
std::vector<std::size_t> class_positions(TokenClass c, std::size_t n_tokens, const Span& subject, const Span& verb,
                                         const Span& object);

struct TraceGrid {
  Role role = Role::subject;
  Site site = Site::hidden;
  std::optional<Site> severed;
  int sever_window = -1;
  // aie[class][layer - 1]; a class absent from every sample stays 0 with count 0.
  std::vector<std::vector<double>> aie;
  std::vector<std::size_t> counts;  // samples contributing to each class
  double ate = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  int n_layers() const { return aie.empty() ? 0 : static_cast<int>(aie.front().size()); }
  const std::vector<double>& row(TokenClass c) const { return aie.at(static_cast<std::size_t>(c)); }
};

// Mean per-class IE over the non-skipped results. Per statement a class's
// value is the mean over its positions. Throws ContractError when nothing is
// left to aggregate or layer counts disagree.
TraceGrid aggregate(std::span<const TraceRunResult> results, Site site);

// CSV (rows = token classes, columns = layers) plus a JSON sidecar.
void save_grid(const std::filesystem::path& csv_path, const TraceGrid& g);
TraceGrid load_grid(const std::filesystem::path& csv_path);
std::filesystem::path grid_metadata_path(const std::filesystem::path& csv_path);

}  // namespace plaus
