#pragma once

#include <string>
#include <vector>

namespace plaus {

// Inclusive, 1-based layer range.
struct LayerWindow {
  int start = 1;
  int end = 1;

  int size() const { return end - start + 1; }
  bool contains(int layer) const { return layer >= start && layer <= end; }
  std::vector<int> layers() const;
  std::string str() const;  // "4-8"
  auto operator<=>(const LayerWindow&) const = default;
};

// values[l - 1] is the AIE at layer l.
struct AieProfile {
  std::vector<double> values;
  std::string token_class;

  int n_layers() const { return static_cast<int>(values.size()); }
  void validate() const;  // non-empty, finite; throws ContractError
};

// Window of `size` layers ending at the highest-AIE layer (lowest layer on
// ties), clipped at layer 1.
LayerWindow memit_window(const AieProfile& p, int size);

// Means of every `size`-layer window, in order of start layer.
std::vector<double> moving_averages(const AieProfile& p, int size);

struct ScoredWindow {
  LayerWindow window;
  double mean = 0.0;
};
// Window of `size` layers with the largest mean AIE; lowest start on ties.
ScoredWindow max_moving_average_window(const AieProfile& p, int size);

// Deduplicated candidates: the size-5 argmax window, the best size-3 and
// size-5 moving-average windows, and each of those shifted by one layer either
// way (clipped to [1, L]).
std::vector<LayerWindow> candidate_windows(const AieProfile& p);

LayerWindow parse_window(const std::string& s);

}  // namespace plaus
