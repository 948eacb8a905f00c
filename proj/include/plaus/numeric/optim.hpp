#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "plaus/numeric/tensor.hpp"

namespace plaus {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam moments, one buffer per parameter, plus the step counter used for
// bias correction.
struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

// One update of `params` from `grads` (grads[i] matches params[i] in size).
// Throws NumericError before touching anything if a gradient is NaN/Inf.
void sgd_adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
                   OptimizerState& state, const OptimizerConfig& cfg);

// Convenience: step on each parameter's accumulated .grad().
void step_on_grads(std::span<Tensor> params, OptimizerState& state, const OptimizerConfig& cfg);

}  // namespace plaus
