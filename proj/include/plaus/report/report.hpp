#pragma once

// Heatmaps of trace grids and side-by-side summaries of update methods.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plaus/eval/metrics.hpp"
#include "plaus/tracing/trace.hpp"

namespace plaus {

struct HeatmapFiles {
  std::filesystem::path csv, meta, svg;
};

// Rows are token classes (or "row i" for grids of another height), columns are
// layers, color is the AIE. The SVG embeds role, site and sample count.
std::string heatmap_svg(const TraceGrid& g);
// Writes <stem>.csv, its metadata sidecar, and <stem>.svg.
HeatmapFiles export_heatmap(const TraceGrid& g, const std::filesystem::path& stem);

struct SplitMetrics {
  std::string split;
  std::size_t n_rows = 0;
  std::uint64_t ids_hash = 0;  // fingerprint of the row ids
  double f1 = 0.0;
  double accuracy = 0.0;
  Percent efficacy;
  Percent relapse;
};
SplitMetrics split_metrics(std::string split, std::span<const PredictionRow> table);

struct MethodReport {
  std::string method;  // "Base Model", "RFT Early Stop", "RFT Fixed Epoch", "Edit"
  std::string edit_token = "-";
  std::string edit_layers = "-";
  std::vector<SplitMetrics> splits;
  // Efficacy on the probe sources plus the probe scores, when a probe set exists.
  Percent probe_efficacy;
  std::optional<ProbeScores> probes;
};

struct SummaryTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
  std::string to_text() const;  // aligned columns
};

// One row per report. Throws ContractError on an empty input or when the
// reports were computed over different splits.
SummaryTable compare_update_methods(std::span<const MethodReport> reports);

void save_method_reports(const std::filesystem::path& path, std::span<const MethodReport> reports);
std::vector<MethodReport> load_method_reports(const std::filesystem::path& path);

}  // namespace plaus
