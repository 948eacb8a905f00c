#pragma once

// Test-only oracles shared by the unit and acceptance suites. Nothing here
// calls back into the code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "plaus/numeric/tensor.hpp"

namespace plaus::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Triple-loop reference product of row-major a[m,k] and b[k,n].
inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

// Central finite differences of f at the current value of each input.
// f rebuilds its graph from the inputs every call.
inline std::vector<std::vector<double>> finite_difference(
    std::vector<Tensor>& inputs, const std::function<double()>& f, double step = 1e-5) {
  std::vector<std::vector<double>> out;
  for (auto& t : inputs) {
    std::vector<double> g(t.size());
    auto d = t.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double orig = d[i];
      d[i] = orig + step;
      const double fp = f();
      d[i] = orig - step;
      const double fm = f();
      d[i] = orig;
      g[i] = (fp - fm) / (2.0 * step);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Max over entries of |a - b| / max(|a|, |b|, floor).
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace plaus::testing

#include "plaus/model/transformer.hpp"

namespace plaus::testing {

// Overwrite every weight with N(mean, std) noise; layer-norm gains get mean 1
// so the model stays well conditioned. Produces activations far from zero
// so equality checks are not vacuous.
inline void randomize(Transformer& model, std::uint64_t seed, double std = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, std);
  for (auto& [name, t] : model.named_parameters()) {
    const bool gain = name.size() >= 2 && name.compare(name.size() - 2, 2, ".g") == 0;
    auto d = t.mutable_data();
    for (auto& x : d) x = (gain ? 1.0 : 0.0) + n(rng);
  }
}

inline TransformerConfig tiny_config(int vocab = 12, int layers = 2, int d_model = 8) {
  TransformerConfig c;
  c.n_layers = layers;
  c.d_model = d_model;
  c.n_heads = 2;
  c.d_mlp = 4 * d_model;
  c.vocab_size = vocab;
  c.max_seq = 12;
  return c;
}

}  // namespace plaus::testing
