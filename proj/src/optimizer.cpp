#include "resfcn/optimizer.hpp"

#include <cmath>

#include "resfcn/errors.hpp"

namespace resfcn {

OptimizerState OptimizerState::for_parameters(std::span<const Parameter> params) {
  OptimizerState s;
  s.accumulators.reserve(params.size());
  for (const Parameter& p : params) s.accumulators.emplace_back(p.tensor.numel(), 0.0);
  return s;
}

void rmsprop_step(std::span<Parameter> params, OptimizerState& state, const RmsPropConfig& cfg) {
  if (state.accumulators.size() != params.size()) {
    throw ContractError("optimizer state holds " + std::to_string(state.accumulators.size()) +
                        " accumulators for " + std::to_string(params.size()) + " parameters");
  }
  if (!(cfg.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  const Precision prec = precision();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = params[k].tensor;
    auto& acc = state.accumulators[k];
    if (acc.size() != t.numel()) {
      throw ContractError("optimizer state shape mismatch for " + params[k].name);
    }
    auto theta = t.data();
    const auto grad = t.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = (grad.empty() ? 0.0 : grad[i]) + cfg.weight_decay * theta[i];
      acc[i] = round_to_precision(cfg.decay * acc[i] + (1.0 - cfg.decay) * g * g, prec);
      theta[i] = round_to_precision(theta[i] - cfg.learning_rate * g / (std::sqrt(acc[i]) + cfg.eps), prec);
    }
  }
  ++state.step;
}

}  // namespace resfcn
