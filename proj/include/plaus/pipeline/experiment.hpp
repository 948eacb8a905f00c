#pragma once

// End-to-end experiment runner. Every stage reads its inputs from and writes
// its outputs to one artifact directory, so stages can also be run one at a
// time from the command line.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plaus/corpus/statement.hpp"
#include "plaus/corpus/world.hpp"
#include "plaus/editing/edit.hpp"
#include "plaus/model/transformer.hpp"
#include "plaus/selection/windows.hpp"
#include "plaus/training/train.hpp"

namespace plaus {

struct TracingSettings {
  std::vector<Role> roles = {Role::subject, Role::verb, Role::object};
  std::vector<Site> sites = {Site::hidden, Site::attn_out, Site::mlp_out};
  std::vector<Site> severed = {Site::attn_out, Site::mlp_out};
  int sever_window = -1;
  // Correctly predicted inference1 statements traced per role (0 = all).
  std::size_t max_statements = 100;
  // Site whose AIE profile at the edit token feeds window selection.
  Site selection_site = Site::mlp_out;

  bool operator==(const TracingSettings&) const = default;
};

// The sweep is the cartesian product of every list with the candidate windows
// of each role.
struct SweepSpace {
  std::vector<Role> roles = {Role::subject, Role::verb, Role::object};
  std::vector<double> lrs = {0.5};
  std::vector<double> kl_factors = {0.0625};
  std::vector<std::optional<double>> cutoffs = {std::nullopt};
  std::vector<double> cov_weights = {30.0, 100.0};
  std::vector<double> clamp_norms = {0.5, 1.0};
  int max_steps = 40;
  double weight_decay = 0.25;
  double cov_damping = 1e-2;

  bool operator==(const SweepSpace&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  WorldConfig world;
  TransformerConfig model;  // vocab_size comes from the generated world
  TrainConfig train;
  TrainConfig rft;
  TracingSettings tracing;
  SweepSpace sweep;
  // Corrected inference statements re-traced after editing (0 = all).
  std::size_t retrace_max = 60;
  std::filesystem::path out_dir = "run";

  ExperimentConfig();
  // Throws ConfigError.
  void validate() const;
  // Seeds of the world, weight init, tracing noise and sweep, all derived
  // from `seed`.
  std::uint64_t sub_seed(std::string_view name) const;
  // Fingerprint of everything but out_dir.
  std::string hash() const;
  bool operator==(const ExperimentConfig&) const = default;
};

std::string config_to_json(const ExperimentConfig& c);
// Fields absent from `json` keep the value they have in `base`.
ExperimentConfig config_from_json(const std::string& json, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

// One swept edit configuration and its inference1 scores.
struct SweepEntry {
  Role token = Role::verb;
  LayerWindow window;
  double lr = 0.0;
  double kl_factor = 0.0;
  std::optional<double> cutoff;
  double cov_weight = 0.0;
  double clamp_norm = 0.0;
  double f1 = 0.0;
  std::optional<double> efficacy, relapse;
  std::size_t n_edits = 0;
  std::string error;  // non-empty when the edit batch failed
  bool winner = false;

  EditConfig edit_config(const SweepSpace& space) const;
  std::string key() const;
};

enum class Stage { generate, finetune, trace, select, sweep, edit, rft, eval, retrace, report };
inline constexpr Stage kStages[] = {Stage::generate, Stage::finetune, Stage::trace, Stage::select, Stage::sweep,
                                    Stage::edit,     Stage::rft,      Stage::eval,  Stage::retrace, Stage::report};
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

struct StageResult {
  Stage stage = Stage::generate;
  double seconds = 0.0;
};

// Runs one stage against `cfg.out_dir`. A failure leaves a marker file
// "FAILED.<stage>" with the error text next to the partial artifacts and
// rethrows.
StageResult run_stage(const ExperimentConfig& cfg, Stage stage);
// All stages in order; stops at the first failure.
std::vector<StageResult> run_pipeline(const ExperimentConfig& cfg);

// Artifact names relative to the output directory.
namespace artifacts {
inline constexpr const char* config = "config.json";
inline constexpr const char* splits = "splits.jsonl";
inline constexpr const char* statistics = "statistics.json";
inline constexpr const char* base_model = "base.ckpt";
inline constexpr const char* base_curve = "base_curve.csv";
inline constexpr const char* trace_dir = "traces";
inline constexpr const char* candidates = "candidates.json";
inline constexpr const char* sweep_log = "sweep_log.jsonl";
inline constexpr const char* frozen_config = "frozen_config.json";
inline constexpr const char* probes = "probes.jsonl";
inline constexpr const char* edit_dir = "edits";
inline constexpr const char* rft_dir = "rft";
inline constexpr const char* predictions_dir = "predictions";
inline constexpr const char* metrics = "metrics.json";
inline constexpr const char* summary_csv = "summary.csv";
inline constexpr const char* summary_txt = "summary.txt";
inline constexpr const char* retrace = "retrace.json";
inline constexpr const char* manifest = "manifest.json";
}  // namespace artifacts

std::vector<SweepEntry> load_sweep_log(const std::filesystem::path& path);

struct RetraceSummary {
  Role role = Role::verb;
  LayerWindow window;
  std::size_t n_statements = 0;
  double base_aie = 0.0;    // mean over statements, edit token class, window layers
  double edited_aie = 0.0;
};
RetraceSummary load_retrace(const std::filesystem::path& path);

}  // namespace plaus
