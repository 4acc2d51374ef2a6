#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "resfcn/layers.hpp"

namespace resfcn {

struct RmsPropConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  double decay = 0.9;  // rho
  double eps = 1e-8;
};

/// One squared-gradient accumulator per parameter, in parameter order.
struct OptimizerState {
  std::vector<std::vector<double>> accumulators;
  std::uint64_t step = 0;

  static OptimizerState for_parameters(std::span<const Parameter> params);
};

/// RMSprop with coupled L2 weight decay, applied in place:
///   g   <- grad + weight_decay * theta
///   acc <- rho * acc + (1 - rho) * g^2
///   theta <- theta - lr * g / (sqrt(acc) + eps)
/// A parameter without a gradient buffer is treated as having zero gradient.
/// Gradients are left untouched; the caller zeroes them.
void rmsprop_step(std::span<Parameter> params, OptimizerState& state, const RmsPropConfig& cfg);

}  // namespace resfcn
