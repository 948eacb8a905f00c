// Command-line front end of the experiment runner.
//
// Precedence: values from --config win over flags, which win over defaults.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "plaus/errors.hpp"
#include "plaus/log.hpp"
#include "plaus/pipeline/experiment.hpp"

using namespace plaus;

namespace {

template <class T, class P>
std::vector<T> parse_all(const std::vector<std::string>& in, P parse) {
  std::vector<T> out;
  for (const auto& s : in) out.push_back(parse(s));
  return out;
}

std::optional<double> parse_cutoff(const std::string& s) {
  if (s == "none") return std::nullopt;
  return std::stod(s);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plausibility tracing and editing experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  ExperimentConfig cfg;
  std::string config_path, out_dir = cfg.out_dir.string(), log_level = "info";
  std::vector<std::string> trace_roles, trace_sites, severed, sweep_roles, cutoffs;
  std::string selection_site;

  app.add_option("--config", config_path, "JSON config; its values override flags")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "artifact directory")->capture_default_str();
  app.add_option("--log-level", log_level, "debug, info, warn, error or silent")->capture_default_str();
  app.add_option("--seed", cfg.seed, "top-level seed")->capture_default_str();

  app.add_option("--world-statements", cfg.world.n_statements)->capture_default_str();
  app.add_option("--world-categories", cfg.world.n_categories)->capture_default_str();
  app.add_option("--world-entities", cfg.world.entities_per_category)->capture_default_str();
  app.add_option("--world-verbs", cfg.world.n_verbs)->capture_default_str();
  app.add_option("--world-synonym-rate", cfg.world.synonym_rate)->capture_default_str();
  app.add_option("--world-exception-rate", cfg.world.exception_rate)->capture_default_str();
  app.add_option("--world-adjective-rate", cfg.world.adjective_rate)->capture_default_str();
  app.add_option("--world-inference1-fraction", cfg.world.inference1_fraction)->capture_default_str();
  app.add_option("--world-inference2-fraction", cfg.world.inference2_fraction)->capture_default_str();

  app.add_option("--layers", cfg.model.n_layers)->capture_default_str();
  app.add_option("--d-model", cfg.model.d_model)->capture_default_str();
  app.add_option("--heads", cfg.model.n_heads)->capture_default_str();
  app.add_option("--d-mlp", cfg.model.d_mlp)->capture_default_str();
  app.add_option("--max-seq", cfg.model.max_seq)->capture_default_str();

  app.add_option("--train-lr", cfg.train.lr)->capture_default_str();
  app.add_option("--train-batch", cfg.train.batch_size)->capture_default_str();
  app.add_option("--train-epochs", cfg.train.epochs)->capture_default_str();
  app.add_option("--rft-lr", cfg.rft.lr)->capture_default_str();
  app.add_option("--rft-batch", cfg.rft.batch_size)->capture_default_str();
  app.add_option("--rft-epochs", cfg.rft.epochs, "fixed-epoch budget")->capture_default_str();
  app.add_option("--rft-max-epochs", cfg.rft.max_epochs, "early-stop budget")->capture_default_str();

  app.add_option("--trace-roles", trace_roles, "subject, verb, object");
  app.add_option("--trace-sites", trace_sites, "hidden, attn_out, mlp_out");
  app.add_option("--trace-severed", severed, "sub-layers severed in extra traces");
  app.add_option("--sever-window", cfg.tracing.sever_window, "-1 = all later layers")->capture_default_str();
  app.add_option("--trace-statements", cfg.tracing.max_statements, "0 = all")->capture_default_str();
  app.add_option("--selection-site", selection_site, "site whose profile picks the windows");

  app.add_option("--sweep-roles", sweep_roles);
  app.add_option("--sweep-lr", cfg.sweep.lrs);
  app.add_option("--sweep-kl", cfg.sweep.kl_factors);
  app.add_option("--sweep-cutoff", cutoffs, "probabilities or 'none'");
  app.add_option("--sweep-cov-weight", cfg.sweep.cov_weights);
  app.add_option("--sweep-clamp", cfg.sweep.clamp_norms, "0 disables the clamp");
  app.add_option("--edit-steps", cfg.sweep.max_steps)->capture_default_str();
  app.add_option("--edit-weight-decay", cfg.sweep.weight_decay)->capture_default_str();
  app.add_option("--cov-damping", cfg.sweep.cov_damping)->capture_default_str();
  app.add_option("--retrace-statements", cfg.retrace_max, "0 = all")->capture_default_str();

  bool print_config = false;
  std::vector<Stage> stages;
  auto* run = app.add_subcommand("run", "every stage in order");
  run->callback([&] { stages.assign(std::begin(kStages), std::end(kStages)); });
  for (Stage s : kStages) {
    auto* sub = app.add_subcommand(std::string(to_string(s)));
    sub->callback([&stages, s] { stages = {s}; });
  }
  app.get_subcommand("generate")->description("synthetic world and splits");
  app.get_subcommand("finetune")->description("base model on the training split");
  app.get_subcommand("trace")->description("causal traces of the base model");
  app.get_subcommand("select")->description("candidate edit windows from the traces");
  app.get_subcommand("sweep")->description("edit configurations scored on inference1");
  app.get_subcommand("edit")->description("frozen config applied to both inference splits");
  app.get_subcommand("rft")->description("repair-finetuning baselines");
  app.get_subcommand("eval")->description("metrics for every update method");
  app.get_subcommand("retrace")->description("traces of corrected statements before and after editing");
  app.get_subcommand("report")->description("summary tables");
  auto* show = app.add_subcommand("config", "print the resolved config");
  show->callback([&] { print_config = true; });

  CLI11_PARSE(app, argc, argv);

  try {
    if (log_level == "debug") set_log_level(LogLevel::debug);
    else if (log_level == "info") set_log_level(LogLevel::info);
    else if (log_level == "warn") set_log_level(LogLevel::warn);
    else if (log_level == "error") set_log_level(LogLevel::error);
    else if (log_level == "silent") set_log_level(LogLevel::silent);
    else throw ConfigError("unknown log level '" + log_level + "'");

    cfg.out_dir = out_dir;
    auto role = [](const std::string& s) { return parse_role(s); };
    auto site = [](const std::string& s) { return parse_site(s); };
    if (!trace_roles.empty()) cfg.tracing.roles = parse_all<Role>(trace_roles, role);
    if (!trace_sites.empty()) cfg.tracing.sites = parse_all<Site>(trace_sites, site);
    if (!severed.empty()) cfg.tracing.severed = parse_all<Site>(severed, site);
    if (!selection_site.empty()) cfg.tracing.selection_site = parse_site(selection_site);
    if (!sweep_roles.empty()) cfg.sweep.roles = parse_all<Role>(sweep_roles, role);
    if (!cutoffs.empty()) cfg.sweep.cutoffs = parse_all<std::optional<double>>(cutoffs, parse_cutoff);
    if (!config_path.empty()) cfg = load_config(config_path, cfg);
    cfg.validate();

    if (print_config) {
      std::cout << config_to_json(cfg);
      return 0;
    }
    for (Stage s : stages) run_stage(cfg, s);
    if (stages.size() > 1 || stages.front() == Stage::report) {
      std::FILE* f = std::fopen((cfg.out_dir / artifacts::summary_txt).c_str(), "r");
      if (f) {
        char buf[4096];
        std::size_t n;
        while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) std::fwrite(buf, 1, n, stdout);
        std::fclose(f);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
