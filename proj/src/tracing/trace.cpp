#include "plaus/tracing/trace.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "internal/jsonl.hpp"
#include "plaus/errors.hpp"
#include "plaus/rng.hpp"

namespace plaus {

double noise_scale(const Transformer& model, std::span<const SvoStatement> statements, Role role) {
  const auto d = static_cast<std::size_t>(model.config().d_model);
  const auto wte = model.token_embedding().data();
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : statements) {
    const Span& sp = s.span(role);
    for (std::size_t i = sp.begin; i < sp.end; ++i) {
      const auto row = static_cast<std::size_t>(s.tokens.at(i)) * d;
      for (std::size_t j = 0; j < d; ++j) {
        const double x = wte[row + j];
        sum += x;
        sq += x * x;
      }
      n += d;
    }
  }
  if (n == 0) throw ContractError("no " + std::string(to_string(role)) + " tokens to estimate the noise scale from");
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
  return 3.0 * std::sqrt(var);
}

std::vector<double> corruption_noise(const SvoStatement& s, const CorruptionSpec& c, int d_model) {
  const Span& sp = s.span(c.role);
  if (sp.empty()) throw ContractError("statement " + s.id + " has an empty " + std::string(to_string(c.role)) + " span");
  std::vector<double> eps(sp.size() * static_cast<std::size_t>(d_model), 0.0);
  if (c.noise_std == 0.0) return eps;
  Rng rng(derive_seed(c.seed, "noise/" + s.id + "/" + std::string(to_string(c.role))));
  for (auto& e : eps) e = c.noise_std * rng.normal();
  return eps;
}

namespace {

struct Prepared {
  TraceRunResult result;
  ActivationTrace clean, corrupt;
  InterventionSpec noise_only;
  Label gold = Label::False;
  bool skip = false;
};

Prepared prepare(const Transformer& model, const SvoStatement& s, const LabelIds& ids, const CorruptionSpec& c,
                 bool require_correct) {
  if (!s.label) throw ContractError("statement " + s.id + " has no gold label to trace");
  s.validate();
  Prepared p;
  auto& r = p.result;
  r.id = s.id;
  r.n_tokens = s.tokens.size();
  r.subject = s.subject;
  r.verb = s.verb;
  r.object = s.object;
  r.role = c.role;
  p.gold = *s.label;

  ForwardOptions fo;
  fo.trace = &p.clean;
  fo.final_only = true;
  const auto clean_logits = model.forward(s.tokens, fo).to_vector();
  const auto clean = label_from_logits(clean_logits, ids);
  r.p_clean = clean.p(p.gold);
  if (require_correct && clean.label != p.gold) {
    r.skipped = true;
    p.skip = true;
    return p;
  }

  const Span& sp = s.span(c.role);
  p.noise_only.noise = EmbeddingNoise{sp.begin, sp.end, corruption_noise(s, c, model.config().d_model)};
  ForwardOptions co;
  co.intervention = &p.noise_only;
  co.trace = &p.corrupt;
  co.final_only = true;
  r.p_corrupt = label_from_logits(model.forward(s.tokens, co).to_vector(), ids).p(p.gold);
  r.te = r.p_clean - r.p_corrupt;
  return p;
}

struct Cell {
  Site site;
  std::size_t token;
  int layer;
};

// Runs every cell's intervention and writes ie = P_restored[gold] - P*[gold].
template <class MakeSpec>
void run_cells(const Transformer& model, const SvoStatement& s, const LabelIds& ids, Prepared& p,
               const std::vector<Site>& sites, kernels::Exec exec, MakeSpec&& make) {
  const int L = model.config().n_layers;
  const std::size_t T = s.tokens.size();
  std::vector<Cell> cells;
  for (Site site : sites) {
    p.result.ie[site].assign(T, std::vector<double>(static_cast<std::size_t>(L), 0.0));
    for (std::size_t i = 0; i < T; ++i)
      for (int l = 1; l <= L; ++l) cells.push_back({site, i, l});
  }
  std::vector<double> out(cells.size());
#pragma omp parallel for schedule(dynamic, 4) if (exec == kernels::Exec::parallel)
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const InterventionSpec spec = make(cells[k]);
    out[k] = label_from_logits(model.forward_intervened(s.tokens, spec), ids).p(p.gold);
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& c = cells[k];
    p.result.ie[c.site][c.token][static_cast<std::size_t>(c.layer - 1)] = out[k] - p.result.p_corrupt;
  }
}

std::vector<double> copy(std::span<const double> v) { return {v.begin(), v.end()}; }

}  // namespace

TraceRunResult trace_statement(const Transformer& model, const SvoStatement& s, const LabelIds& ids,
                               const CorruptionSpec& corruption, const TraceOptions& opts) {
  Prepared p = prepare(model, s, ids, corruption, opts.require_correct);
  if (p.skip) return p.result;
  run_cells(model, s, ids, p, opts.sites, opts.exec, [&](const Cell& c) {
    InterventionSpec spec = p.noise_only;
    spec.patches.push_back({c.token, c.layer, c.site, copy(p.clean.site(c.site, c.token, c.layer))});
    return spec;
  });
  return p.result;
}

TraceRunResult trace_severed(const Transformer& model, const SvoStatement& s, const LabelIds& ids,
                             const CorruptionSpec& corruption, Site sever_site, int window,
                             const TraceOptions& opts) {
  if (sever_site == Site::hidden) throw ContractError("severing applies to attn_out or mlp_out");
  Prepared p = prepare(model, s, ids, corruption, opts.require_correct);
  p.result.severed = sever_site;
  p.result.sever_window = window;
  if (p.skip) return p.result;
  const int L = model.config().n_layers;
  run_cells(model, s, ids, p, {Site::hidden}, opts.exec, [&](const Cell& c) {
    InterventionSpec spec = p.noise_only;
    spec.patches.push_back({c.token, c.layer, Site::hidden, copy(p.clean.hidden(c.token, c.layer))});
    const int last = window < 0 ? L : std::min(L, c.layer + window);
    for (int l = c.layer + 1; l <= last; ++l)
      spec.severs.push_back({c.token, l, sever_site, copy(p.corrupt.site(sever_site, c.token, l))});
    return spec;
  });
  return p.result;
}

std::string_view to_string(TokenClass c) {
  switch (c) {
    case TokenClass::first_subject: return "first_subject";
    case TokenClass::last_subject: return "last_subject";
    case TokenClass::first_verb: return "first_verb";
    case TokenClass::last_verb: return "last_verb";
    case TokenClass::first_object: return "first_object";
    case TokenClass::last_object: return "last_object";
    case TokenClass::further: return "further";
    case TokenClass::last_token: return "last_token";
  }
  return "?";
}

TokenClass parse_token_class(std::string_view s) {
  for (auto c : kTokenClasses)
    if (to_string(c) == s) return c;
  throw ConfigError("unknown token class '" + std::string(s) + "'");
}

TokenClass last_of(Role r) {
  switch (r) {
    case Role::subject: return TokenClass::last_subject;
    case Role::verb: return TokenClass::last_verb;
    case Role::object: return TokenClass::last_object;
  }
  return TokenClass::last_subject;
}

std::vector<std::size_t> class_positions(TokenClass c, std::size_t n, const Span& subject, const Span& verb,
                                         const Span& object) {
  switch (c) {
    case TokenClass::first_subject: return {subject.first()};
    case TokenClass::last_subject: return {subject.last()};
    case TokenClass::first_verb: return {verb.first()};
    case TokenClass::last_verb: return {verb.last()};
    case TokenClass::first_object: return {object.first()};
    case TokenClass::last_object: return {object.last()};
    case TokenClass::last_token: return {n - 1};
    case TokenClass::further: {
      std::vector<std::size_t> out;
      for (std::size_t i = 0; i + 1 < n; ++i)
        if (!subject.contains(i) && !verb.contains(i) && !object.contains(i)) out.push_back(i);
      return out;
    }
  }
  return {};
}

TraceGrid aggregate(std::span<const TraceRunResult> results, Site site) {
  TraceGrid g;
  g.site = site;
  const std::size_t C = std::size(kTokenClasses);
  std::size_t L = 0;
  double te_sum = 0.0;
  bool first = true;
  for (const auto& r : results) {
    if (r.skipped) continue;
    auto it = r.ie.find(site);
    if (it == r.ie.end()) throw ContractError("trace result " + r.id + " lacks site " + std::string(to_string(site)));
    const auto& ie = it->second;
    const std::size_t rl = ie.empty() ? 0 : ie.front().size();
    if (first) {
      L = rl;
      g.role = r.role;
      g.severed = r.severed;
      g.sever_window = r.sever_window;
      g.aie.assign(C, std::vector<double>(L, 0.0));
      g.counts.assign(C, 0);
      first = false;
    } else if (rl != L) {
      throw ContractError("trace results disagree on the layer count");
    }
    for (std::size_t c = 0; c < C; ++c) {
      const auto pos = class_positions(kTokenClasses[c], r.n_tokens, r.subject, r.verb, r.object);
      if (pos.empty()) continue;
      for (std::size_t l = 0; l < L; ++l) {
        double v = 0.0;
        for (auto i : pos) v += ie[i][l];
        g.aie[c][l] += v / static_cast<double>(pos.size());
      }
      ++g.counts[c];
    }
    te_sum += r.te;
    ++g.n_samples;
  }
  if (g.n_samples == 0) throw ContractError("no traced samples to aggregate");
  for (std::size_t c = 0; c < C; ++c)
    if (g.counts[c] > 0)
      for (auto& v : g.aie[c]) v /= static_cast<double>(g.counts[c]);
  g.ate = te_sum / static_cast<double>(g.n_samples);
  return g;
}

std::filesystem::path grid_metadata_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

void save_grid(const std::filesystem::path& csv_path, const TraceGrid& g) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out << "class";
  for (int l = 1; l <= g.n_layers(); ++l) out << ',' << l;
  out << '\n';
  char buf[40];
  for (std::size_t c = 0; c < g.aie.size(); ++c) {
    out << to_string(kTokenClasses[c]);
    for (double v : g.aie[c]) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + csv_path.string());

  detail::json meta = {{"role", to_string(g.role)},   {"site", to_string(g.site)},
                       {"ate", g.ate},                {"n_samples", g.n_samples},
                       {"seed", g.seed},              {"counts", g.counts},
                       {"sever_window", g.sever_window}};
  meta["severed"] = g.severed ? detail::json(std::string(to_string(*g.severed))) : detail::json(nullptr);
  std::ofstream m(grid_metadata_path(csv_path), std::ios::binary);
  if (!m) throw IoError("cannot write " + grid_metadata_path(csv_path).string());
  m << meta.dump(2) << '\n';
}

TraceGrid load_grid(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open " + csv_path.string());
  TraceGrid g;
  std::string line;
  std::getline(in, line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const auto c = static_cast<std::size_t>(parse_token_class(cell));
    if (c != g.aie.size()) throw ParseError("line " + std::to_string(line_no) + ": token classes out of order");
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    g.aie.push_back(std::move(row));
  }
  std::ifstream m(grid_metadata_path(csv_path));
  if (!m) throw IoError("cannot open " + grid_metadata_path(csv_path).string());
  detail::json meta;
  try {
    meta = detail::json::parse(m);
    g.role = parse_role(meta.at("role").get<std::string>());
    g.site = parse_site(meta.at("site").get<std::string>());
    g.ate = meta.at("ate").get<double>();
    g.n_samples = meta.at("n_samples").get<std::size_t>();
    g.seed = meta.at("seed").get<std::uint64_t>();
    g.counts = meta.at("counts").get<std::vector<std::size_t>>();
    g.sever_window = meta.at("sever_window").get<int>();
    if (!meta.at("severed").is_null()) g.severed = parse_site(meta.at("severed").get<std::string>());
  } catch (const detail::json::exception& e) {
    throw ParseError("grid metadata: " + std::string(e.what()));
  }
  return g;
}

}  // namespace plaus
