#pragma once

// Batched MLP weight editing: optimize a target residual at the edit token's
// top-of-window hidden state, then spread it over the window's MLP output
// projections as covariance-regularized least-squares updates.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plaus/corpus/statement.hpp"
#include "plaus/errors.hpp"
#include "plaus/model/transformer.hpp"
#include "plaus/numeric/kernels.hpp"
#include "plaus/selection/windows.hpp"

namespace plaus {

// Shared hyperparameters of one edit batch.
struct EditConfig {
  Role token = Role::verb;  // edits act at the last token of this span
  LayerWindow layers{1, 1};
  double lr = 0.5;
  double kl_factor = 0.0625;
  std::optional<double> cutoff;
  int max_steps = 100;
  // Penalty on |delta|^2 / |h|^2 and a hard cap |delta| <= clamp_norm * |h|
  // (0 disables the cap).
  double weight_decay = 0.0;
  double clamp_norm = 0.0;
  // Weight of the key covariance against the edit keys; larger values
  // protect unrelated behaviour more strongly.
  double cov_weight = 1.0;

  void validate(int n_layers) const;
};

struct EditRequest {
  SvoStatement statement;
  Label target = Label::True;
  EditConfig config;
};

enum class StopReason { max_steps, cutoff };
std::string_view to_string(StopReason r);

struct ResidualTarget {
  std::string id;
  std::vector<int> tokens;
  std::size_t position = 0;  // edit token
  int layer = 0;             // top of the window; where z lives
  Label target = Label::True;
  std::vector<double> z;
  std::vector<double> delta;  // z minus the unedited hidden state
  int steps = 0;
  std::vector<double> trajectory;  // p(target) before each step and at the end
  StopReason stop = StopReason::max_steps;
  double p_initial = 0.0;
  double p_final = 0.0;
  bool reverted = false;  // optimization lowered p(target); delta reset to 0
};

// Second moments of MLP keys (inputs of the output projection), per layer.
struct CovarianceStats {
  int dim = 0;
  std::map<int, std::vector<double>> c;  // row-major dim x dim
  std::size_t n_samples = 0;             // key vectors per layer
  double damping = 1e-2;

  const std::vector<double>& at(int layer) const;
};

// Keys at every token position of `sample`. Throws ConfigError for damping <= 0
// and ContractError for an empty sample.
CovarianceStats estimate_covariance(const Transformer& model, std::span<const SvoStatement> sample,
                                    std::span<const int> layers, double damping = 1e-2,
                                    kernels::Exec exec = kernels::default_exec());

// Gradient ascent on log p(target) with the edit-token hidden state at the
// window top offset by delta, regularized toward the unedited next-token
// distribution at the edit position.
ResidualTarget compute_residual(const Transformer& model, const EditRequest& request, const LabelIds& ids);

struct LayerUpdate {
  int layer = 0;
  double residual_norm = 0.0;  // mean |z - h| over edits before this layer
  double update_norm = 0.0;    // Frobenius norm of the weight change
};

struct SpreadResult {
  Transformer model;
  std::vector<LayerUpdate> layers;
};

// Spreads the targets over `window` in ascending layer order. The input model
// is never modified; a failed solve throws EditError.
SpreadResult spread_update(const Transformer& model, std::span<const ResidualTarget> targets,
                           const LayerWindow& window, const CovarianceStats& stats, double cov_weight = 1.0);

struct EditRecord {
  std::string id;
  Role token = Role::verb;
  LayerWindow layers;
  int steps = 0;
  StopReason stop = StopReason::max_steps;
  double pre_p_true = 0.0;
  double post_p_true = 0.0;
  bool success = false;
};

struct EditOutcome {
  Transformer model;
  std::vector<EditRecord> records;
  std::vector<LayerUpdate> layers;
  std::size_t n_filtered = 0;  // requests dropped because already predicted right
};

// Residuals depend on the window only through its top layer, so sweeps share
// them across windows through this cache. A cache belongs to one model.
using ResidualCache = std::map<std::string, ResidualTarget>;
std::string residual_cache_key(const EditRequest& r);

// All requests must share one config. Requests whose target already matches
// the prediction are dropped.
EditOutcome apply_edits(const Transformer& model, std::span<const EditRequest> requests, const LabelIds& ids,
                        const CovarianceStats& stats, ResidualCache* cache = nullptr,
                        kernels::Exec exec = kernels::default_exec());

void save_edit_report(const std::filesystem::path& path, std::span<const EditRecord> records);
std::vector<EditRecord> load_edit_report(const std::filesystem::path& path);

}  // namespace plaus
