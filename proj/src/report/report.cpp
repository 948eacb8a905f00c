#include "plaus/report/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "internal/jsonl.hpp"
#include "plaus/errors.hpp"
#include "plaus/rng.hpp"

namespace plaus {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// White to purple for gains, white to teal for losses.
std::string cell_color(double v, double scale) {
  const double t = scale > 0.0 ? std::clamp(std::abs(v) / scale, 0.0, 1.0) : 0.0;
  const int pos[3] = {88, 24, 140}, neg[3] = {0, 128, 128};
  const int* hi = v >= 0.0 ? pos : neg;
  int rgb[3];
  for (int i = 0; i < 3; ++i) rgb[i] = static_cast<int>(std::lround(255.0 + t * (hi[i] - 255.0)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

std::string row_label(const TraceGrid& g, std::size_t r) {
  if (g.aie.size() == std::size(kTokenClasses)) return std::string(to_string(kTokenClasses[r]));
  return "row " + std::to_string(r + 1);
}

detail::json percent_json(const Percent& p) { return p ? detail::json(*p) : detail::json(nullptr); }
Percent percent_from(const detail::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string heatmap_svg(const TraceGrid& g) {
  if (g.aie.empty() || g.n_layers() == 0) throw ContractError("cannot draw an empty trace grid");
  const int cell_w = 36, cell_h = 24, left = 120, top = 44;
  const int rows = static_cast<int>(g.aie.size()), cols = g.n_layers();
  double scale = 0.0;
  for (const auto& row : g.aie)
    for (double v : row) scale = std::max(scale, std::abs(v));

  detail::json meta = {{"role", to_string(g.role)}, {"site", to_string(g.site)}, {"n_samples", g.n_samples},
                       {"ate", g.ate}, {"max_abs", scale}};
  if (g.severed) meta["severed"] = to_string(*g.severed);

  std::ostringstream out;
  const int width = left + cols * cell_w + 20, height = top + rows * cell_h + 40;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<metadata>" << meta.dump() << "</metadata>\n";
  std::string title = "AIE, corrupted " + std::string(to_string(g.role)) + ", site " + std::string(to_string(g.site));
  if (g.severed) title += ", " + std::string(to_string(*g.severed)) + " severed";
  title += ", n=" + std::to_string(g.n_samples);
  out << "<title>" << title << "</title>\n";
  out << "<text x=\"" << left << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
  for (int r = 0; r < rows; ++r) {
    const auto label = row_label(g, static_cast<std::size_t>(r));
    out << "<text x=\"" << left - 6 << "\" y=\"" << top + r * cell_h + cell_h / 2 + 4
        << "\" text-anchor=\"end\">" << label << "</text>\n";
    for (int c = 0; c < cols; ++c) {
      const double v = g.aie[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      out << "<rect class=\"cell\" x=\"" << left + c * cell_w << "\" y=\"" << top + r * cell_h << "\" width=\""
          << cell_w << "\" height=\"" << cell_h << "\" fill=\"" << cell_color(v, scale) << "\" data-row=\"" << label
          << "\" data-layer=\"" << c + 1 << "\" data-value=\"" << fmt("%.17g", v) << "\"/>\n";
    }
  }
  for (int c = 0; c < cols; ++c) {
    out << "<text x=\"" << left + c * cell_w + cell_w / 2 << "\" y=\"" << top + rows * cell_h + 14
        << "\" text-anchor=\"middle\">" << c + 1 << "</text>\n";
  }
  out << "<text x=\"" << left + cols * cell_w / 2 << "\" y=\"" << top + rows * cell_h + 30
      << "\" text-anchor=\"middle\">layer (max |AIE| " << fmt("%.4f", scale) << ")</text>\n";
  out << "</svg>\n";
  return out.str();
}

HeatmapFiles export_heatmap(const TraceGrid& g, const std::filesystem::path& stem) {
  HeatmapFiles f;
  f.csv = stem;
  f.csv += ".csv";
  f.svg = stem;
  f.svg += ".svg";
  f.meta = grid_metadata_path(f.csv);
  const auto svg = heatmap_svg(g);
  save_grid(f.csv, g);
  std::ofstream out(f.svg, std::ios::binary);
  if (!out) throw IoError("cannot write " + f.svg.string());
  out << svg;
  if (!out) throw IoError("failed writing " + f.svg.string());
  return f;
}

SplitMetrics split_metrics(std::string split, std::span<const PredictionRow> table) {
  validate_table(table);
  SplitMetrics m;
  m.split = std::move(split);
  m.n_rows = table.size();
  std::vector<std::string> ids;
  for (const auto& r : table) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  std::string joined;
  for (const auto& id : ids) joined += id + '\n';
  m.ids_hash = fnv1a(joined);
  m.f1 = macro_f1(table);
  m.accuracy = accuracy(table);
  m.efficacy = efficacy(table);
  m.relapse = relapse(table);
  return m;
}

SummaryTable compare_update_methods(std::span<const MethodReport> reports) {
  if (reports.empty()) throw ContractError("no method reports to compare");
  const auto& ref = reports.front().splits;
  for (const auto& r : reports) {
    bool same = r.splits.size() == ref.size();
    for (std::size_t i = 0; same && i < ref.size(); ++i)
      same = r.splits[i].split == ref[i].split && r.splits[i].n_rows == ref[i].n_rows &&
             r.splits[i].ids_hash == ref[i].ids_hash;
    if (!same) throw ContractError("method '" + r.method + "' was scored on different splits");
  }
  const bool with_probes = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.probes; });
  // F1 deltas are shown against the base model when it is present.
  const MethodReport* base = nullptr;
  for (const auto& r : reports)
    if (r.method == "Base Model") base = &r;

  SummaryTable t;
  t.header = {"Update Method", "Edit Token", "Edit Layers"};
  for (const auto& s : ref)
    for (const char* col : {"F1 Score %", "Efficacy %", "Relapse %"}) t.header.push_back(s.split + " " + col);
  if (with_probes) {
    for (const char* col : {"Efficacy %", "Unaffected Subject %", "Unaffected Object %", "Affected Subject %",
                            "Affected Verb %", "Affected Object %", "Affected Paraphrase %", "Affected Reasoning %",
                            "Average Unaffected %", "Average Affected %"})
      t.header.push_back(std::string("probe ") + col);
  }
  for (const auto& r : reports) {
    std::vector<std::string> row = {r.method, r.edit_token, r.edit_layers};
    for (std::size_t i = 0; i < r.splits.size(); ++i) {
      const auto& s = r.splits[i];
      std::string f1 = format_percent(s.f1);
      if (base && &r != base) f1 += " (" + fmt("%+.2f", s.f1 - base->splits[i].f1) + ")";
      row.push_back(f1);
      row.push_back(format_percent(s.efficacy));
      row.push_back(format_percent(s.relapse));
    }
    if (with_probes) {
      row.push_back(format_percent(r.probe_efficacy));
      for (auto c : kProbeCategories) {
        Percent v;
        if (r.probes) {
          auto it = r.probes->by_category.find(c);
          if (it != r.probes->by_category.end()) v = it->second;
        }
        row.push_back(format_percent(v));
      }
      row.push_back(format_percent(r.probes ? r.probes->average_unaffected : std::nullopt));
      row.push_back(format_percent(r.probes ? r.probes->average_affected : std::nullopt));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string SummaryTable::to_csv() const {
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  };
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + quote(cells[i]);
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

std::string SummaryTable::to_text() const {
  std::vector<std::size_t> w(header.size(), 0);
  for (std::size_t i = 0; i < header.size(); ++i) w[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size() && i < w.size(); ++i) w[i] = std::max(w[i], r[i].size());
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out += i ? " | " : "| ";
      out += cells[i] + std::string(w[i] - cells[i].size(), ' ');
    }
    out += " |\n";
  };
  line(header);
  out += '|';
  for (auto n : w) out += std::string(n + 2, '-') + '|';
  out += '\n';
  for (const auto& r : rows) line(r);
  return out;
}

void save_method_reports(const std::filesystem::path& path, std::span<const MethodReport> reports) {
  detail::json all = detail::json::array();
  for (const auto& r : reports) {
    detail::json j = {{"method", r.method}, {"edit_token", r.edit_token}, {"edit_layers", r.edit_layers}};
    j["splits"] = detail::json::array();
    for (const auto& s : r.splits) {
      j["splits"].push_back({{"split", s.split},
                             {"n_rows", s.n_rows},
                             {"ids_hash", s.ids_hash},
                             {"f1", s.f1},
                             {"accuracy", s.accuracy},
                             {"efficacy", percent_json(s.efficacy)},
                             {"relapse", percent_json(s.relapse)}});
    }
    j["probe_efficacy"] = percent_json(r.probe_efficacy);
    if (r.probes) {
      detail::json p = detail::json::object();
      for (const auto& [c, v] : r.probes->by_category) p[std::string(to_string(c))] = percent_json(v);
      detail::json counts = detail::json::object();
      for (const auto& [c, n] : r.probes->counts) counts[std::string(to_string(c))] = n;
      j["probes"] = {{"by_category", p},
                     {"counts", counts},
                     {"average_unaffected", percent_json(r.probes->average_unaffected)},
                     {"average_affected", percent_json(r.probes->average_affected)}};
    } else {
      j["probes"] = nullptr;
    }
    all.push_back(std::move(j));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << all.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<MethodReport> load_method_reports(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<MethodReport> out;
  try {
    const auto all = detail::json::parse(in);
    for (const auto& j : all) {
      MethodReport r;
      r.method = j.at("method").get<std::string>();
      r.edit_token = j.at("edit_token").get<std::string>();
      r.edit_layers = j.at("edit_layers").get<std::string>();
      for (const auto& s : j.at("splits")) {
        SplitMetrics m;
        m.split = s.at("split").get<std::string>();
        m.n_rows = s.at("n_rows").get<std::size_t>();
        m.ids_hash = s.at("ids_hash").get<std::uint64_t>();
        m.f1 = s.at("f1").get<double>();
        m.accuracy = s.at("accuracy").get<double>();
        m.efficacy = percent_from(s.at("efficacy"));
        m.relapse = percent_from(s.at("relapse"));
        r.splits.push_back(std::move(m));
      }
      r.probe_efficacy = percent_from(j.at("probe_efficacy"));
      if (!j.at("probes").is_null()) {
        ProbeScores p;
        const auto& pj = j.at("probes");
        for (const auto& [k, v] : pj.at("by_category").items()) p.by_category[parse_probe_category(k)] = percent_from(v);
        for (const auto& [k, v] : pj.at("counts").items()) p.counts[parse_probe_category(k)] = v.get<std::size_t>();
        p.average_unaffected = percent_from(pj.at("average_unaffected"));
        p.average_affected = percent_from(pj.at("average_affected"));
        r.probes = std::move(p);
      }
      out.push_back(std::move(r));
    }
  } catch (const detail::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace plaus
