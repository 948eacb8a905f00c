#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "plaus/errors.hpp"
#include "plaus/log.hpp"
#include "plaus/pipeline/experiment.hpp"
#include "plaus/report/report.hpp"

using namespace plaus;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny(const std::string& name) {
  ExperimentConfig c;
  c.world.n_statements = 600;
  c.model.n_layers = 5;
  c.model.d_model = 8;
  c.model.n_heads = 2;
  c.model.d_mlp = 32;
  c.train.epochs = 2;
  c.rft.epochs = 1;
  c.rft.max_epochs = 1;
  c.tracing.roles = {Role::object};
  c.tracing.sites = {Site::hidden, Site::mlp_out};
  c.tracing.severed = {};
  c.tracing.max_statements = 4;
  c.sweep.roles = {Role::object};
  c.sweep.cov_weights = {100.0};
  c.sweep.clamp_norms = {0.5, 1.0};
  c.sweep.max_steps = 5;
  c.out_dir = fs::temp_directory_path() / ("plaus_pipeline_" + name);
  fs::remove_all(c.out_dir);
  return c;
}

// Everything up to the report; re-tracing needs a model good enough to be
// corrected, which a two-epoch toy is not.
void run_through_eval(const ExperimentConfig& c) {
  for (Stage s : {Stage::generate, Stage::finetune, Stage::trace, Stage::select, Stage::sweep, Stage::edit,
                  Stage::rft, Stage::eval, Stage::report})
    run_stage(c, s);
}

}  // namespace

TEST_CASE("config JSON round-trips and keeps unspecified fields") {
  ExperimentConfig c;
  c.seed = 42;
  c.model.n_layers = 7;
  c.sweep.cutoffs = {std::nullopt, 0.9};
  c.tracing.selection_site = Site::hidden;
  CHECK(config_from_json(config_to_json(c)) == c);

  const auto partial = config_from_json(R"({"seed": 5, "sweep": {"lrs": [0.1, 0.2]}})", c);
  CHECK(partial.seed == 5);
  CHECK(partial.sweep.lrs == std::vector<double>{0.1, 0.2});
  CHECK(partial.model.n_layers == 7);
  CHECK(partial.sweep.cutoffs == c.sweep.cutoffs);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(config_from_json(R"({"sede": 1})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"sweep": {"lr": [0.1]}})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"model": 3})"), ConfigError);
  CHECK_THROWS_AS(config_from_json(R"({"model": {"n_layers": 4}})").validate(), ConfigError);
  ExperimentConfig c;
  c.sweep.clamp_norms.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("config hash ignores the output directory") {
  ExperimentConfig a, b;
  b.out_dir = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.seed = 2;
  CHECK(a.hash() != b.hash());
  CHECK(a.sub_seed("world") != a.sub_seed("init"));
  CHECK(a.sub_seed("world") != b.sub_seed("world"));
}

TEST_CASE("stage names round-trip") {
  for (Stage s : kStages) CHECK(parse_stage(to_string(s)) == s);
  CHECK_THROWS_AS(parse_stage("deploy"), ConfigError);
}

TEST_CASE("a failed stage leaves a marker") {
  auto c = tiny("fail");
  CHECK_THROWS(run_stage(c, Stage::sweep));
  CHECK(fs::exists(c.out_dir / "FAILED.sweep"));
  CHECK(!slurp(c.out_dir / "FAILED.sweep").empty());
  fs::remove_all(c.out_dir);
}

TEST_CASE("small pipeline: sweep log, frozen config and reruns") {
  set_log_level(LogLevel::error);
  auto a = tiny("run_a");
  run_through_eval(a);

  const auto log = load_sweep_log(a.out_dir / artifacts::sweep_log);
  REQUIRE(!log.empty());
  std::set<std::string> keys;
  std::size_t winners = 0;
  double best = -1.0;
  for (const auto& e : log) {
    keys.insert(e.key());
    winners += e.winner;
    if (e.error.empty()) best = std::max(best, e.f1);
  }
  CHECK(keys.size() == log.size());
  CHECK(log.size() % 2 == 0);  // two clamp norms per window
  CHECK(winners == 1);
  for (const auto& e : log)
    if (e.winner) CHECK(e.f1 == best);

  const auto reports = load_method_reports(a.out_dir / artifacts::metrics);
  REQUIRE(reports.size() == 4);
  CHECK(reports.front().method == "Base Model");
  CHECK(reports.back().method == "Edit");
  CHECK(fs::exists(a.out_dir / artifacts::summary_csv));
  CHECK(fs::exists(a.out_dir / artifacts::manifest));
  CHECK(slurp(a.out_dir / artifacts::manifest).find(a.hash()) != std::string::npos);

  auto b = tiny("run_b");
  run_through_eval(b);
  for (const char* f : {artifacts::metrics, artifacts::sweep_log, artifacts::summary_csv, artifacts::base_model})
    CHECK_MESSAGE(slurp(a.out_dir / f) == slurp(b.out_dir / f), f);

  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
  set_log_level(LogLevel::info);
}
