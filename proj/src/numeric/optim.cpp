#include "plaus/numeric/optim.hpp"

#include <cmath>

#include "plaus/errors.hpp"

namespace plaus {

void sgd_adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
                   OptimizerState& state, const OptimizerConfig& cfg) {
  if (params.size() != grads.size()) {
    throw DimensionError("optimizer: " + std::to_string(params.size()) + " params but " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size()) {
      throw DimensionError("optimizer: gradient " + std::to_string(i) + " has " +
                           std::to_string(grads[i].size()) + " entries for param " +
                           shape_str(params[i].shape()));
    }
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw NumericError("optimizer: non-finite gradient");
    }
  }

  if (cfg.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto w = params[i].mutable_data();
      for (std::size_t j = 0; j < w.size(); ++j) w[j] -= cfg.lr * grads[i][j];
    }
    ++state.step;
    return;
  }

  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), {});
    state.v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void step_on_grads(std::span<Tensor> params, OptimizerState& state, const OptimizerConfig& cfg) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  sgd_adam_step(params, grads, state, cfg);
}

}  // namespace plaus
