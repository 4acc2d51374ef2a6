#include "resfcn/layers.hpp"

#include <cmath>

#include "resfcn/errors.hpp"

namespace resfcn {

void ParamFactory::add(const std::string& layer, const char* leaf, int depth, const Tensor& t) {
  const std::string name = layer + "." + leaf;
  for (const Parameter& p : params_) {
    if (p.name == name) throw ConfigError("duplicate parameter name " + name);
  }
  Tensor handle = t;
  handle.set_requires_grad(true);
  params_.push_back(Parameter{name, layer, depth, handle});
}

Conv2d ParamFactory::conv(const std::string& name, std::size_t c_in, std::size_t c_out,
                          std::size_t k, std::size_t stride) {
  if (c_in == 0 || c_out == 0) throw ConfigError("conv " + name + ": zero channels");
  Conv2d layer;
  layer.stride = stride;
  layer.padding = k / 2;
  std::vector<double> w(c_out * c_in * k * k);
  Rng rng(derive_seed(seed_, {hash_name(name)}));
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(c_in * k * k)));
  for (double& v : w) v = normal(rng);
  round_to_precision(w);
  layer.weight = Tensor(Shape{c_out, c_in, k, k}, std::move(w));
  layer.bias = Tensor(Shape{c_out}, 0.0);
  const int depth = next_depth();
  add(name, "weight", depth, layer.weight);
  add(name, "bias", depth, layer.bias);
  return layer;
}

std::shared_ptr<BatchNormState> ParamFactory::batch_norm(const std::string& name,
                                                         std::size_t channels) {
  auto state = std::make_shared<BatchNormState>(channels);
  const int depth = next_depth();
  add(name, "gamma", depth, state->gamma);
  add(name, "beta", depth, state->beta);
  bns_.push_back(NamedBatchNorm{name, state});
  return state;
}

}  // namespace resfcn
