#include "plaus/pipeline/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "internal/jsonl.hpp"
#include "plaus/corpus/records.hpp"
#include "plaus/errors.hpp"
#include "plaus/eval/metrics.hpp"
#include "plaus/log.hpp"
#include "plaus/model/checkpoint.hpp"
#include "plaus/report/report.hpp"
#include "plaus/rng.hpp"
#include "plaus/tracing/trace.hpp"

namespace plaus {

namespace fs = std::filesystem;
using detail::json;

// ---------------------------------------------------------------- config

ExperimentConfig::ExperimentConfig() {
  model.n_layers = 6;
  model.d_model = 32;
  model.n_heads = 4;
  model.d_mlp = 128;
  model.max_seq = 16;
  train.epochs = 30;
  train.lr = 1e-3;
  train.batch_size = 16;
  rft.epochs = 10;
  rft.lr = 1e-3;
  rft.batch_size = 16;
  rft.max_epochs = 10;
}

void ExperimentConfig::validate() const {
  world.validate();
  train.validate();
  rft.validate();
  auto m = model;
  m.vocab_size = std::max(m.vocab_size, 2);
  m.validate();
  if (model.n_layers < 5) throw ConfigError("window selection needs at least 5 layers");
  if (tracing.roles.empty() || tracing.sites.empty()) throw ConfigError("tracing needs roles and sites");
  if (std::find(tracing.sites.begin(), tracing.sites.end(), tracing.selection_site) == tracing.sites.end())
    throw ConfigError("the selection site must be traced");
  for (Site s : tracing.severed)
    if (s == Site::hidden) throw ConfigError("only attn_out or mlp_out can be severed");
  for (Role r : sweep.roles)
    if (std::find(tracing.roles.begin(), tracing.roles.end(), r) == tracing.roles.end())
      throw ConfigError("swept role '" + std::string(to_string(r)) + "' is not traced");
  if (sweep.roles.empty() || sweep.lrs.empty() || sweep.kl_factors.empty() || sweep.cutoffs.empty() ||
      sweep.cov_weights.empty() || sweep.clamp_norms.empty())
    throw ConfigError("every sweep dimension needs at least one value");
  if (sweep.max_steps < 0) throw ConfigError("sweep max_steps must be >= 0");
  if (!(sweep.cov_damping > 0.0)) throw ConfigError("cov_damping must be > 0");
  // Reuse the edit config checks on every swept value.
  for (double lr : sweep.lrs)
    for (double kl : sweep.kl_factors)
      for (const auto& cut : sweep.cutoffs)
        for (double cw : sweep.cov_weights)
          for (double cl : sweep.clamp_norms) {
            EditConfig e;
            e.layers = {1, 1};
            e.lr = lr;
            e.kl_factor = kl;
            e.cutoff = cut;
            e.max_steps = sweep.max_steps;
            e.weight_decay = sweep.weight_decay;
            e.clamp_norm = cl;
            e.cov_weight = cw;
            e.validate(model.n_layers);
          }
}

std::uint64_t ExperimentConfig::sub_seed(std::string_view name) const { return derive_seed(seed, name); }

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <class T, class F>
json list_json(const std::vector<T>& v, F f) {
  json a = json::array();
  for (const auto& x : v) a.push_back(f(x));
  return a;
}

json config_json(const ExperimentConfig& c, bool with_out_dir) {
  json j;
  j["seed"] = c.seed;
  j["world"] = {{"n_statements", c.world.n_statements},
                {"n_categories", c.world.n_categories},
                {"entities_per_category", c.world.entities_per_category},
                {"n_verbs", c.world.n_verbs},
                {"synonym_rate", c.world.synonym_rate},
                {"exception_rate", c.world.exception_rate},
                {"adjective_rate", c.world.adjective_rate},
                {"inference1_fraction", c.world.inference1_fraction},
                {"inference2_fraction", c.world.inference2_fraction}};
  j["model"] = {{"n_layers", c.model.n_layers}, {"d_model", c.model.d_model}, {"n_heads", c.model.n_heads},
                {"d_mlp", c.model.d_mlp},       {"max_seq", c.model.max_seq}};
  auto train = [](const TrainConfig& t) {
    return json{{"lr", t.lr}, {"batch_size", t.batch_size}, {"epochs", t.epochs}, {"max_epochs", t.max_epochs}};
  };
  j["train"] = train(c.train);
  j["rft"] = train(c.rft);
  auto role = [](Role r) { return json(std::string(to_string(r))); };
  auto site = [](Site s) { return json(std::string(to_string(s))); };
  j["tracing"] = {{"roles", list_json(c.tracing.roles, role)},
                  {"sites", list_json(c.tracing.sites, site)},
                  {"severed", list_json(c.tracing.severed, site)},
                  {"sever_window", c.tracing.sever_window},
                  {"max_statements", c.tracing.max_statements},
                  {"selection_site", to_string(c.tracing.selection_site)}};
  auto num = [](double x) { return json(x); };
  j["sweep"] = {{"roles", list_json(c.sweep.roles, role)},
                {"lrs", list_json(c.sweep.lrs, num)},
                {"kl_factors", list_json(c.sweep.kl_factors, num)},
                {"cutoffs", list_json(c.sweep.cutoffs, optional_json)},
                {"cov_weights", list_json(c.sweep.cov_weights, num)},
                {"clamp_norms", list_json(c.sweep.clamp_norms, num)},
                {"max_steps", c.sweep.max_steps},
                {"weight_decay", c.sweep.weight_decay},
                {"cov_damping", c.sweep.cov_damping}};
  j["retrace_max"] = c.retrace_max;
  if (with_out_dir) j["out_dir"] = c.out_dir.string();
  return j;
}

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

template <class T, class F>
void read_list(const json& j, const char* key, std::vector<T>& out, F parse) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array()) throw ConfigError(std::string("'") + key + "' must be a list");
  out.clear();
  for (const auto& x : *it) out.push_back(parse(x));
}

void read_train(const json& j, TrainConfig& t) {
  read_if(j, "lr", t.lr);
  read_if(j, "batch_size", t.batch_size);
  read_if(j, "epochs", t.epochs);
  read_if(j, "max_epochs", t.max_epochs);
}

// Every key a config may carry is one the serializer emits.
void check_keys(const json& j, const json& known, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    auto it = known.find(k);
    if (it == known.end()) throw ConfigError("unknown config key '" + where + k + "'");
    if (it->is_object()) {
      if (!v.is_object()) throw ConfigError("config key '" + where + k + "' must be an object");
      check_keys(v, *it, where + k + ".");
    }
  }
}

}  // namespace

std::string ExperimentConfig::hash() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(config_json(*this, false).dump())));
  return buf;
}

std::string config_to_json(const ExperimentConfig& c) { return config_json(c, true).dump(2) + "\n"; }

ExperimentConfig config_from_json(const std::string& text, ExperimentConfig c) {
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    check_keys(j, config_json(ExperimentConfig{}, true), "");
    read_if(j, "seed", c.seed);
    if (auto w = j.find("world"); w != j.end()) {
      read_if(*w, "n_statements", c.world.n_statements);
      read_if(*w, "n_categories", c.world.n_categories);
      read_if(*w, "entities_per_category", c.world.entities_per_category);
      read_if(*w, "n_verbs", c.world.n_verbs);
      read_if(*w, "synonym_rate", c.world.synonym_rate);
      read_if(*w, "exception_rate", c.world.exception_rate);
      read_if(*w, "adjective_rate", c.world.adjective_rate);
      read_if(*w, "inference1_fraction", c.world.inference1_fraction);
      read_if(*w, "inference2_fraction", c.world.inference2_fraction);
    }
    if (auto m = j.find("model"); m != j.end()) {
      read_if(*m, "n_layers", c.model.n_layers);
      read_if(*m, "d_model", c.model.d_model);
      read_if(*m, "n_heads", c.model.n_heads);
      read_if(*m, "d_mlp", c.model.d_mlp);
      read_if(*m, "max_seq", c.model.max_seq);
    }
    if (auto t = j.find("train"); t != j.end()) read_train(*t, c.train);
    if (auto t = j.find("rft"); t != j.end()) read_train(*t, c.rft);
    auto role = [](const json& x) { return parse_role(x.get<std::string>()); };
    auto site = [](const json& x) { return parse_site(x.get<std::string>()); };
    auto num = [](const json& x) { return x.get<double>(); };
    if (auto t = j.find("tracing"); t != j.end()) {
      read_list(*t, "roles", c.tracing.roles, role);
      read_list(*t, "sites", c.tracing.sites, site);
      read_list(*t, "severed", c.tracing.severed, site);
      read_if(*t, "sever_window", c.tracing.sever_window);
      read_if(*t, "max_statements", c.tracing.max_statements);
      if (auto s = t->find("selection_site"); s != t->end()) c.tracing.selection_site = site(*s);
    }
    if (auto s = j.find("sweep"); s != j.end()) {
      read_list(*s, "roles", c.sweep.roles, role);
      read_list(*s, "lrs", c.sweep.lrs, num);
      read_list(*s, "kl_factors", c.sweep.kl_factors, num);
      read_list(*s, "cutoffs", c.sweep.cutoffs,
                [](const json& x) { return x.is_null() ? std::optional<double>() : x.get<double>(); });
      read_list(*s, "cov_weights", c.sweep.cov_weights, num);
      read_list(*s, "clamp_norms", c.sweep.clamp_norms, num);
      read_if(*s, "max_steps", c.sweep.max_steps);
      read_if(*s, "weight_decay", c.sweep.weight_decay);
      read_if(*s, "cov_damping", c.sweep.cov_damping);
    }
    read_if(j, "retrace_max", c.retrace_max);
    if (auto o = j.find("out_dir"); o != j.end()) c.out_dir = o->get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(std::string("bad config: ") + e.what());
  }
  return c;
}

ExperimentConfig load_config(const fs::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), std::move(base));
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " (has the producing stage run?)");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

void save_config(const fs::path& path, const ExperimentConfig& c) { write_text(path, config_to_json(c)); }

// ---------------------------------------------------------------- sweep entries

EditConfig SweepEntry::edit_config(const SweepSpace& space) const {
  EditConfig e;
  e.token = token;
  e.layers = window;
  e.lr = lr;
  e.kl_factor = kl_factor;
  e.cutoff = cutoff;
  e.max_steps = space.max_steps;
  e.weight_decay = space.weight_decay;
  e.clamp_norm = clamp_norm;
  e.cov_weight = cov_weight;
  return e;
}

std::string SweepEntry::key() const {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s|%s|%.17g|%.17g|%s|%.17g|%.17g", std::string(to_string(token)).c_str(),
                window.str().c_str(), lr, kl_factor, cutoff ? std::to_string(*cutoff).c_str() : "none", cov_weight,
                clamp_norm);
  return buf;
}

namespace {

json entry_json(const SweepEntry& e, const std::string& hash) {
  return {{"config_hash", hash},
          {"edit_token", to_string(last_of(e.token))},
          {"role", to_string(e.token)},
          {"layers", e.window.str()},
          {"lr", e.lr},
          {"kl_factor", e.kl_factor},
          {"cutoff", optional_json(e.cutoff)},
          {"cov_weight", e.cov_weight},
          {"clamp_norm", e.clamp_norm},
          {"n_edits", e.n_edits},
          {"f1", e.error.empty() ? json(e.f1) : json(nullptr)},
          {"efficacy", optional_json(e.efficacy)},
          {"relapse", optional_json(e.relapse)},
          {"error", e.error},
          {"winner", e.winner}};
}

SweepEntry entry_from(const json& j) {
  SweepEntry e;
  e.token = parse_role(j.at("role").get<std::string>());
  e.window = parse_window(j.at("layers").get<std::string>());
  e.lr = j.at("lr").get<double>();
  e.kl_factor = j.at("kl_factor").get<double>();
  if (!j.at("cutoff").is_null()) e.cutoff = j.at("cutoff").get<double>();
  e.cov_weight = j.at("cov_weight").get<double>();
  e.clamp_norm = j.at("clamp_norm").get<double>();
  e.n_edits = j.at("n_edits").get<std::size_t>();
  e.f1 = j.at("f1").is_null() ? 0.0 : j.at("f1").get<double>();
  if (!j.at("efficacy").is_null()) e.efficacy = j.at("efficacy").get<double>();
  if (!j.at("relapse").is_null()) e.relapse = j.at("relapse").get<double>();
  e.error = j.at("error").get<std::string>();
  e.winner = j.at("winner").get<bool>();
  return e;
}

}  // namespace

std::vector<SweepEntry> load_sweep_log(const fs::path& path) {
  std::vector<SweepEntry> out;
  for (const auto& r : detail::read_jsonl(path)) {
    try {
      out.push_back(entry_from(r.value));
    } catch (const json::exception& e) {
      r.fail(e.what());
    }
  }
  return out;
}

RetraceSummary load_retrace(const fs::path& path) {
  const auto j = read_json(path);
  RetraceSummary s;
  try {
    s.role = parse_role(j.at("role").get<std::string>());
    s.window = parse_window(j.at("layers").get<std::string>());
    s.n_statements = j.at("n_statements").get<std::size_t>();
    s.base_aie = j.at("base_aie").get<double>();
    s.edited_aie = j.at("edited_aie").get<double>();
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return s;
}

// ---------------------------------------------------------------- stages

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::generate: return "generate";
    case Stage::finetune: return "finetune";
    case Stage::trace: return "trace";
    case Stage::select: return "select";
    case Stage::sweep: return "sweep";
    case Stage::edit: return "edit";
    case Stage::rft: return "rft";
    case Stage::eval: return "eval";
    case Stage::retrace: return "retrace";
    case Stage::report: return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view s) {
  for (Stage st : kStages)
    if (to_string(st) == s) return st;
  throw ConfigError("unknown stage '" + std::string(s) + "'");
}

namespace {

// Shared state of one stage run: paths, the world, and an artifact log that
// ends up in the manifest.
class Run {
 public:
  explicit Run(const ExperimentConfig& cfg) : cfg_(cfg), dir_(cfg.out_dir), hash_(cfg.hash()) {}

  const ExperimentConfig& cfg() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  fs::path path(const fs::path& rel) const { return dir_ / rel; }

  WorldConfig world_config() const {
    auto w = cfg_.world;
    w.seed = cfg_.sub_seed("world");
    return w;
  }
  const GeneratedWorld& world() {
    if (!world_) world_ = generate_world(world_config());
    return *world_;
  }
  const SplitSet& splits() {
    if (!splits_) splits_ = load_splits(path(artifacts::splits));
    return *splits_;
  }
  LabelIds ids() { return world().world.vocab().label_ids(); }
  const std::vector<std::string>& vocab() { return world().world.vocab().words(); }

  Transformer load_model(const fs::path& rel) {
    auto ck = load_checkpoint(path(rel));
    if (ck.vocab != vocab()) throw ContractError(rel.string() + " was trained on a different vocabulary");
    return std::move(ck.model);
  }
  void save_model(const fs::path& rel, const Transformer& m) {
    fs::create_directories(path(rel).parent_path());
    save_checkpoint(path(rel), m, vocab());
    produced(rel);
  }
  void save_text(const fs::path& rel, const std::string& text) {
    fs::create_directories(path(rel).parent_path());
    write_text(path(rel), text);
    produced(rel);
  }
  void save_json(const fs::path& rel, json j) {
    j["config_hash"] = hash_;
    save_text(rel, j.dump(2) + "\n");
  }
  void produced(const fs::path& rel) { produced_.push_back(rel.generic_string()); }

  // Records content fingerprints of this stage's outputs.
  void write_manifest() {
    const auto mpath = path(artifacts::manifest);
    json m = fs::exists(mpath) ? read_json(mpath) : json::object();
    m["config_hash"] = hash_;
    if (!m.contains("files")) m["files"] = json::object();
    for (const auto& rel : produced_) {
      char buf[20];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(read_text(path(rel)))));
      m["files"][rel] = {{"config_hash", hash_}, {"fnv1a", buf}};
    }
    write_text(mpath, m.dump(2) + "\n");
  }

 private:
  const ExperimentConfig& cfg_;
  fs::path dir_;
  std::string hash_;
  std::optional<GeneratedWorld> world_;
  std::optional<SplitSet> splits_;
  std::vector<std::string> produced_;
};

std::vector<PredictionRow> table_of(std::span<const SvoStatement> s, std::span<const Label> pre,
                                    std::span<const Label> post) {
  std::vector<PredictionRow> t;
  for (std::size_t i = 0; i < s.size(); ++i) t.push_back({s[i].id, pre[i], post[i], *s[i].label});
  return t;
}

std::vector<SvoStatement> mispredicted(std::span<const SvoStatement> s, std::span<const Label> pred) {
  std::vector<SvoStatement> out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (pred[i] != *s[i].label) out.push_back(s[i]);
  return out;
}

std::vector<EditRequest> requests_for(std::span<const SvoStatement> wrong, const EditConfig& ec) {
  std::vector<EditRequest> r;
  for (const auto& s : wrong) r.push_back({s, *s.label, ec});
  return r;
}

std::vector<int> all_layers(int n) {
  std::vector<int> v;
  for (int l = 1; l <= n; ++l) v.push_back(l);
  return v;
}

std::string grid_stem(Role r, Site s, std::optional<Site> severed) {
  std::string stem = std::string(to_string(r)) + "_" + std::string(to_string(s));
  if (severed) stem += "_sever_" + std::string(to_string(*severed));
  return stem;
}

void save_heatmap(Run& run, const TraceGrid& g, const std::string& stem) {
  const fs::path rel = fs::path(artifacts::trace_dir) / stem;
  fs::create_directories(run.path(artifacts::trace_dir));
  const auto files = export_heatmap(g, run.path(rel));
  for (const auto& f : {files.csv, files.meta, files.svg}) run.produced(fs::relative(f, run.path("")));
}

// Statements the model predicts correctly, in split order, capped at `max`.
std::vector<SvoStatement> correctly_predicted(const Transformer& m, std::span<const SvoStatement> s,
                                              const LabelIds& ids, std::size_t max) {
  const auto pred = predict_labels(m, s, ids);
  std::vector<SvoStatement> out;
  for (std::size_t i = 0; i < s.size() && (max == 0 || out.size() < max); ++i)
    if (pred[i] == *s[i].label) out.push_back(s[i]);
  return out;
}

void stage_generate(Run& run) {
  const auto& gw = run.world();
  fs::create_directories(run.path(""));
  // The directory is implied by where the file lives; leaving it out keeps
  // runs of one config byte-identical wherever they are written.
  run.save_text(artifacts::config, config_json(run.cfg(), false).dump(2) + "\n");
  save_splits(run.path(artifacts::splits), gw.splits);
  run.produced(artifacts::splits);
  save_statistics(run.path(artifacts::statistics), compute_statistics(gw.splits, {}));
  run.produced(artifacts::statistics);
}

void stage_finetune(Run& run) {
  const auto& cfg = run.cfg();
  const auto& sp = run.splits();
  auto mc = cfg.model;
  mc.vocab_size = static_cast<int>(run.vocab().size());
  const Transformer init(mc, cfg.sub_seed("init"));
  auto tc = cfg.train;
  tc.seed = derive_seed(cfg.sub_seed("init"), "order");
  tc.early_stop = false;
  const auto res = base_finetune(init, sp.training, tc, run.ids(), sp.inference1);
  run.save_model(artifacts::base_model, res.model);
  std::string csv = "epoch,loss,f1,accuracy\n";
  char buf[128];
  for (const auto& e : res.curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.loss, e.f1.value_or(NAN),
                  e.accuracy.value_or(NAN));
    csv += buf;
  }
  run.save_text(artifacts::base_curve, csv);
  if (res.diverged) throw NumericError("base finetuning diverged; last good weights were saved");
  log_info("finetune: inference1 F1 " + format_percent(res.curve.back().f1));
}

void stage_trace(Run& run) {
  const auto& cfg = run.cfg();
  const auto base = run.load_model(artifacts::base_model);
  const auto ids = run.ids();
  const auto traced = correctly_predicted(base, run.splits().inference1, ids, cfg.tracing.max_statements);
  if (traced.empty()) throw ContractError("the base model predicts no inference1 statement correctly");
  TraceOptions opts;
  opts.sites = cfg.tracing.sites;
  for (Role role : cfg.tracing.roles) {
    CorruptionSpec c{role, noise_scale(base, traced, role), cfg.sub_seed("noise")};
    std::vector<TraceRunResult> plain;
    for (const auto& s : traced) plain.push_back(trace_statement(base, s, ids, c, opts));
    for (Site site : cfg.tracing.sites) {
      auto g = aggregate(plain, site);
      g.seed = c.seed;
      save_heatmap(run, g, grid_stem(role, site, std::nullopt));
    }
    for (Site sev : cfg.tracing.severed) {
      TraceOptions so = opts;
      so.sites = {Site::hidden};
      std::vector<TraceRunResult> res;
      for (const auto& s : traced) res.push_back(trace_severed(base, s, ids, c, sev, cfg.tracing.sever_window, so));
      auto g = aggregate(res, Site::hidden);
      g.seed = c.seed;
      save_heatmap(run, g, grid_stem(role, Site::hidden, sev));
    }
    log_info("trace: " + std::string(to_string(role)) + " done over " + std::to_string(traced.size()) +
             " statements");
  }
}

void stage_select(Run& run) {
  const auto& cfg = run.cfg();
  json out;
  out["roles"] = json::array();
  for (Role role : cfg.sweep.roles) {
    const auto stem = grid_stem(role, cfg.tracing.selection_site, std::nullopt);
    const auto g = load_grid(run.path(fs::path(artifacts::trace_dir) / (stem + ".csv")));
    AieProfile p{g.row(last_of(role)), std::string(to_string(last_of(role)))};
    json r = {{"role", to_string(role)},
              {"token_class", p.token_class},
              {"site", to_string(cfg.tracing.selection_site)},
              {"profile", p.values},
              {"memit_window", memit_window(p, 5).str()},
              {"max_average_3", max_moving_average_window(p, 3).window.str()},
              {"max_average_5", max_moving_average_window(p, 5).window.str()}};
    r["windows"] = json::array();
    for (const auto& w : candidate_windows(p)) r["windows"].push_back(w.str());
    out["roles"].push_back(std::move(r));
  }
  run.save_json(artifacts::candidates, out);
}

std::map<Role, std::vector<LayerWindow>> load_candidates(Run& run) {
  const auto j = read_json(run.path(artifacts::candidates));
  std::map<Role, std::vector<LayerWindow>> out;
  for (const auto& r : j.at("roles"))
    for (const auto& w : r.at("windows"))
      out[parse_role(r.at("role").get<std::string>())].push_back(parse_window(w.get<std::string>()));
  return out;
}

void stage_sweep(Run& run) {
  const auto& cfg = run.cfg();
  const auto& sw = cfg.sweep;
  const auto base = run.load_model(artifacts::base_model);
  const auto ids = run.ids();
  const auto& inf1 = run.splits().inference1;
  const auto pre = predict_labels(base, inf1, ids);
  const auto wrong = mispredicted(inf1, pre);
  if (wrong.empty()) throw ContractError("the base model makes no inference1 mistakes to edit");
  const auto stats =
      estimate_covariance(base, run.splits().training, all_layers(base.config().n_layers), sw.cov_damping);
  const auto candidates = load_candidates(run);

  std::vector<SweepEntry> entries;
  for (Role role : sw.roles)
    for (const auto& w : candidates.at(role))
      for (double lr : sw.lrs)
        for (double kl : sw.kl_factors)
          for (const auto& cut : sw.cutoffs)
            for (double cw : sw.cov_weights)
              for (double cl : sw.clamp_norms) {
                SweepEntry e;
                e.token = role;
                e.window = w;
                e.lr = lr;
                e.kl_factor = kl;
                e.cutoff = cut;
                e.cov_weight = cw;
                e.clamp_norm = cl;
                entries.push_back(e);
              }

  ResidualCache cache;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    try {
      const auto reqs = requests_for(wrong, e.edit_config(sw));
      const auto out = apply_edits(base, reqs, ids, stats, &cache);
      const auto post = predict_labels(out.model, inf1, ids);
      const auto table = table_of(inf1, pre, post);
      e.n_edits = reqs.size() - out.n_filtered;
      e.f1 = macro_f1(table);
      e.efficacy = efficacy(table);
      e.relapse = relapse(table);
      if (!best || e.f1 > entries[*best].f1) best = i;
    } catch (const EditError& err) {
      e.error = err.what();
    }
    log_info("sweep " + std::to_string(i + 1) + "/" + std::to_string(entries.size()) + " " + e.key() + " F1 " +
             (e.error.empty() ? format_percent(e.f1) : "failed"));
  }
  if (!best) throw EditError("every swept configuration failed");
  entries[*best].winner = true;

  std::string log;
  for (const auto& e : entries) log += entry_json(e, run.hash()).dump() + "\n";
  run.save_text(artifacts::sweep_log, log);
  run.save_json(artifacts::frozen_config, entry_json(entries[*best], run.hash()));
}

SweepEntry load_frozen(Run& run) { return entry_from(read_json(run.path(artifacts::frozen_config))); }

void stage_edit(Run& run) {
  const auto& cfg = run.cfg();
  const auto frozen = load_frozen(run);
  const auto ec = frozen.edit_config(cfg.sweep);
  const auto base = run.load_model(artifacts::base_model);
  const auto ids = run.ids();
  const auto& sp = run.splits();
  const auto stats = estimate_covariance(base, sp.training, ec.layers.layers(), cfg.sweep.cov_damping);

  for (Split split : {Split::inference1, Split::inference2}) {
    const auto& data = sp.get(split);
    const auto pre = predict_labels(base, data, ids);
    const auto out = apply_edits(base, requests_for(mispredicted(data, pre), ec), ids, stats);
    const auto name = std::string(to_string(split));
    run.save_model(fs::path(artifacts::edit_dir) / (name + ".ckpt"), out.model);
    fs::create_directories(run.path(artifacts::edit_dir));
    const fs::path report = fs::path(artifacts::edit_dir) / (name + "_edits.jsonl");
    save_edit_report(run.path(report), out.records);
    run.produced(report);

    if (split == Split::inference2) {
      const auto probes = build_probe_set(run.world().world, data, pre, cfg.sub_seed("sweep"));
      save_probes(run.path(artifacts::probes), probes.items);
      run.produced(artifacts::probes);
      save_statistics(run.path(artifacts::statistics), compute_statistics(sp, probes.items));
      run.produced(artifacts::statistics);
    }
  }
}

void stage_rft(Run& run) {
  const auto& cfg = run.cfg();
  const auto base = run.load_model(artifacts::base_model);
  const auto ids = run.ids();
  const auto& sp = run.splits();
  for (Split split : {Split::inference1, Split::inference2}) {
    const auto& data = sp.get(split);
    const auto wrong = mispredicted(data, predict_labels(base, data, ids));
    const auto name = std::string(to_string(split));
    auto tc = cfg.rft;
    tc.seed = derive_seed(cfg.sub_seed("sweep"), "rft/" + name);
    tc.early_stop = false;
    const auto fixed = repair_finetune_fixed(base, wrong, tc, ids);
    tc.early_stop = true;
    tc.selection_split = name;
    const auto early = repair_finetune_earlystop(base, wrong, tc, ids, data);
    run.save_model(fs::path(artifacts::rft_dir) / ("fixed_" + name + ".ckpt"), fixed.model);
    run.save_model(fs::path(artifacts::rft_dir) / ("early_" + name + ".ckpt"), early.model);
    std::string csv = "epoch,loss,f1\n";
    char buf[96];
    for (const auto& e : early.curve) {
      std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.loss, e.f1.value_or(NAN));
      csv += buf;
    }
    run.save_text(fs::path(artifacts::rft_dir) / ("early_" + name + "_curve.csv"), csv);
    log_info("rft: " + name + " early stop selected epoch " + std::to_string(early.selected_epoch));
  }
}

struct MethodModels {
  std::string name, slug;
  std::string inference1, inference2;  // checkpoint paths
};

std::string label_str(Label l) { return std::string(to_string(l)); }

void stage_eval(Run& run) {
  const auto frozen = load_frozen(run);
  const auto ids = run.ids();
  const auto& sp = run.splits();
  const auto base = run.load_model(artifacts::base_model);
  const auto probes = load_probes(run.path(artifacts::probes));

  std::map<std::string, Label> source_gold;
  for (const auto& s : sp.inference2) source_gold[s.id] = *s.label;
  std::vector<SvoStatement> probe_statements;
  for (const auto& p : probes) probe_statements.push_back(p.statement);
  std::map<std::string, Label> probe_pre;
  {
    const auto pl = predict_labels(base, probe_statements, ids);
    for (std::size_t i = 0; i < probes.size(); ++i) probe_pre[probes[i].statement.id] = pl[i];
  }

  const std::string edit_dir = artifacts::edit_dir, rft_dir = artifacts::rft_dir;
  const std::vector<MethodModels> methods = {
      {"Base Model", "base", artifacts::base_model, artifacts::base_model},
      {"RFT Early Stop", "rft_early", rft_dir + "/early_inference1.ckpt", rft_dir + "/early_inference2.ckpt"},
      {"RFT Fixed Epoch", "rft_fixed", rft_dir + "/fixed_inference1.ckpt", rft_dir + "/fixed_inference2.ckpt"},
      {"Edit", "edit", edit_dir + "/inference1.ckpt", edit_dir + "/inference2.ckpt"},
  };
  std::vector<MethodReport> reports;
  fs::create_directories(run.path(artifacts::predictions_dir));
  for (const auto& m : methods) {
    MethodReport rep;
    rep.method = m.name;
    if (m.slug == "edit") {
      rep.edit_token = std::string(to_string(last_of(frozen.token)));
      rep.edit_layers = frozen.window.str();
    }
    Transformer model2;
    for (Split split : {Split::inference1, Split::inference2}) {
      const auto& data = sp.get(split);
      const auto model = run.load_model(split == Split::inference1 ? m.inference1 : m.inference2);
      const auto table = table_of(data, predict_labels(base, data, ids), predict_labels(model, data, ids));
      const auto name = std::string(to_string(split));
      std::string csv = "id,pre,post,gold\n";
      for (const auto& r : table) csv += r.id + "," + label_str(r.pre) + "," + label_str(r.post) + "," + label_str(r.gold) + "\n";
      run.save_text(fs::path(artifacts::predictions_dir) / (m.slug + "_" + name + ".csv"), csv);
      rep.splits.push_back(split_metrics(name, table));
      if (split == Split::inference2) {
        model2 = model;
        rep.probe_efficacy = rep.splits.back().efficacy;
      }
    }
    if (m.slug != "base" && !probes.empty()) {
      const auto pl = predict_labels(model2, probe_statements, ids);
      std::map<std::string, Label> post;
      std::string csv = "id,category,source_id,pre,post\n";
      for (std::size_t i = 0; i < probes.size(); ++i) {
        post[probes[i].statement.id] = pl[i];
        csv += probes[i].statement.id + "," + std::string(to_string(probes[i].category)) + "," +
               probes[i].source_id + "," + label_str(probe_pre.at(probes[i].statement.id)) + "," +
               label_str(pl[i]) + "\n";
      }
      run.save_text(fs::path(artifacts::predictions_dir) / (m.slug + "_probes.csv"), csv);
      rep.probes = probe_scores(probes, source_gold, probe_pre, post);
    }
    reports.push_back(std::move(rep));
  }
  save_method_reports(run.path(artifacts::metrics), reports);
  run.produced(artifacts::metrics);
}

// Mean IE at the edit token over the window layers, per statement, then
// averaged.
double window_aie(std::span<const TraceRunResult> results, Role role, const LayerWindow& w) {
  double total = 0.0;
  for (const auto& r : results) {
    const auto& ie = r.ie.at(Site::hidden);
    const auto& span = role == Role::subject ? r.subject : role == Role::verb ? r.verb : r.object;
    const auto pos = span.last();
    double s = 0.0;
    for (int l : w.layers()) s += ie[pos][static_cast<std::size_t>(l - 1)];
    total += s / w.size();
  }
  return total / static_cast<double>(results.size());
}

void stage_retrace(Run& run) {
  const auto& cfg = run.cfg();
  const auto frozen = load_frozen(run);
  const auto ids = run.ids();
  const auto base = run.load_model(artifacts::base_model);

  // Statements the frozen edit corrected on either inference split, each
  // paired with the model edited on its own split.
  struct Fixed {
    const SvoStatement* s;
    std::string split;
  };
  std::map<std::string, Transformer> edited;
  std::vector<Fixed> fixed;
  for (Split split : {Split::inference1, Split::inference2}) {
    const auto& data = run.splits().get(split);
    const auto name = std::string(to_string(split));
    edited.emplace(name, run.load_model(fs::path(artifacts::edit_dir) / (name + ".ckpt")));
    const auto pre = predict_labels(base, data, ids), post = predict_labels(edited.at(name), data, ids);
    for (std::size_t i = 0; i < data.size() && (cfg.retrace_max == 0 || fixed.size() < cfg.retrace_max); ++i)
      if (pre[i] != *data[i].label && post[i] == *data[i].label) fixed.push_back({&data[i], name});
  }
  if (fixed.empty()) throw ContractError("no inference statement was corrected by the edit");

  // Edits leave the embeddings alone, so one noise scale serves every model.
  std::vector<SvoStatement> statements;
  for (const auto& f : fixed) statements.push_back(*f.s);
  CorruptionSpec c{frozen.token, noise_scale(base, statements, frozen.token), cfg.sub_seed("noise")};
  TraceOptions opts;
  opts.sites = {Site::hidden};
  opts.require_correct = false;
  std::vector<TraceRunResult> rb, re;
  for (const auto& f : fixed) {
    rb.push_back(trace_statement(base, *f.s, ids, c, opts));
    re.push_back(trace_statement(edited.at(f.split), *f.s, ids, c, opts));
  }
  json per = json::array();
  for (std::size_t i = 0; i < fixed.size(); ++i)
    per.push_back({{"id", fixed[i].s->id},
                   {"split", fixed[i].split},
                   {"base", window_aie(std::span(rb).subspan(i, 1), frozen.token, frozen.window)},
                   {"edited", window_aie(std::span(re).subspan(i, 1), frozen.token, frozen.window)}});
  json out = {{"role", to_string(frozen.token)},
              {"edit_token", to_string(last_of(frozen.token))},
              {"layers", frozen.window.str()},
              {"n_statements", fixed.size()},
              {"base_aie", window_aie(rb, frozen.token, frozen.window)},
              {"edited_aie", window_aie(re, frozen.token, frozen.window)},
              {"statements", per}};
  run.save_json(artifacts::retrace, out);
  auto gb = aggregate(rb, Site::hidden), ge = aggregate(re, Site::hidden);
  gb.seed = ge.seed = c.seed;
  save_heatmap(run, gb, "retrace_base_" + std::string(to_string(frozen.token)));
  save_heatmap(run, ge, "retrace_edited_" + std::string(to_string(frozen.token)));
}

void stage_report(Run& run) {
  const auto reports = load_method_reports(run.path(artifacts::metrics));
  const auto table = compare_update_methods(reports);
  run.save_text(artifacts::summary_csv, table.to_csv());

  std::string text = "config " + run.hash() + "\n\n" + table.to_text();
  const auto frozen = load_frozen(run);
  text += "\nfrozen edit config: " + std::string(to_string(last_of(frozen.token))) + " layers " +
          frozen.window.str() + " lr " + std::to_string(frozen.lr) + " kl " + std::to_string(frozen.kl_factor) +
          " cov_weight " + std::to_string(frozen.cov_weight) + " clamp " + std::to_string(frozen.clamp_norm) + "\n";
  if (fs::exists(run.path(artifacts::retrace))) {
    const auto r = load_retrace(run.path(artifacts::retrace));
    char buf[200];
    std::snprintf(buf, sizeof buf, "re-trace over %zu corrected statements: AIE %.4f (base) -> %.4f (edited)\n",
                  r.n_statements, r.base_aie, r.edited_aie);
    text += buf;
  }
  run.save_text(artifacts::summary_txt, text);
}

}  // namespace

StageResult run_stage(const ExperimentConfig& cfg, Stage stage) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Run run(cfg);
  fs::create_directories(cfg.out_dir);
  const auto marker = cfg.out_dir / ("FAILED." + std::string(to_string(stage)));
  fs::remove(marker);
  try {
    switch (stage) {
      case Stage::generate: stage_generate(run); break;
      case Stage::finetune: stage_finetune(run); break;
      case Stage::trace: stage_trace(run); break;
      case Stage::select: stage_select(run); break;
      case Stage::sweep: stage_sweep(run); break;
      case Stage::edit: stage_edit(run); break;
      case Stage::rft: stage_rft(run); break;
      case Stage::eval: stage_eval(run); break;
      case Stage::retrace: stage_retrace(run); break;
      case Stage::report: stage_report(run); break;
    }
    run.write_manifest();
  } catch (const std::exception& e) {
    try {
      run.write_manifest();
    } catch (const std::exception&) {
      // the marker below matters more than a complete manifest
    }
    write_text(marker, std::string(e.what()) + "\n");
    throw;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f s", secs);
  log_info(std::string(to_string(stage)) + ": " + buf);
  return {stage, secs};
}

std::vector<StageResult> run_pipeline(const ExperimentConfig& cfg) {
  std::vector<StageResult> out;
  for (Stage s : kStages) out.push_back(run_stage(cfg, s));
  return out;
}

}  // namespace plaus
