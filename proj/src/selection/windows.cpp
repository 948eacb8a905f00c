#include "plaus/selection/windows.hpp"

#include <algorithm>
#include <cmath>

#include "plaus/errors.hpp"

namespace plaus {

std::vector<int> LayerWindow::layers() const {
  std::vector<int> out;
  for (int l = start; l <= end; ++l) out.push_back(l);
  return out;
}

std::string LayerWindow::str() const { return std::to_string(start) + "-" + std::to_string(end); }

LayerWindow parse_window(const std::string& s) {
  const auto dash = s.find('-');
  try {
    if (dash == std::string::npos) {
      const int l = std::stoi(s);
      return {l, l};
    }
    LayerWindow w{std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
    if (w.start < 1 || w.end < w.start) throw ConfigError("bad layer window '" + s + "'");
    return w;
  } catch (const std::logic_error&) {
    throw ConfigError("bad layer window '" + s + "'");
  }
}

void AieProfile::validate() const {
  if (values.empty()) throw ContractError("AIE profile is empty");
  for (double v : values)
    if (!std::isfinite(v)) throw ContractError("AIE profile has a non-finite value");
}

LayerWindow memit_window(const AieProfile& p, int size) {
  p.validate();
  if (size < 1) throw ContractError("window size must be at least 1");
  // max_element returns the first maximum, which is the lowest layer.
  const int end = static_cast<int>(std::max_element(p.values.begin(), p.values.end()) - p.values.begin()) + 1;
  return {std::max(1, end - size + 1), end};
}

std::vector<double> moving_averages(const AieProfile& p, int size) {
  p.validate();
  if (size < 1 || size > p.n_layers())
    throw ContractError("window size " + std::to_string(size) + " outside [1, " + std::to_string(p.n_layers()) + "]");
  std::vector<double> out;
  for (int s = 0; s + size <= p.n_layers(); ++s) {
    double sum = 0.0;
    for (int l = s; l < s + size; ++l) sum += p.values[static_cast<std::size_t>(l)];
    out.push_back(sum / size);
  }
  return out;
}

ScoredWindow max_moving_average_window(const AieProfile& p, int size) {
  const auto avg = moving_averages(p, size);
  const int s = static_cast<int>(std::max_element(avg.begin(), avg.end()) - avg.begin());
  return {{s + 1, s + size}, avg[static_cast<std::size_t>(s)]};
}

std::vector<LayerWindow> candidate_windows(const AieProfile& p) {
  const int L = p.n_layers();
  if (L < 5) throw ContractError("candidate windows need at least 5 layers");
  std::vector<LayerWindow> bases = {memit_window(p, 5), max_moving_average_window(p, 3).window,
                                    max_moving_average_window(p, 5).window};
  std::vector<LayerWindow> out;
  auto add = [&](LayerWindow w) {
    w.start = std::clamp(w.start, 1, L);
    w.end = std::clamp(w.end, 1, L);
    if (std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
  };
  for (const auto& b : bases) {
    add(b);
    add({b.start - 1, b.end - 1});
    add({b.start + 1, b.end + 1});
  }
  return out;
}

}  // namespace plaus
