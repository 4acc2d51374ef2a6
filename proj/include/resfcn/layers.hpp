#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "resfcn/ops.hpp"

namespace resfcn {

/// A trainable tensor with a unique hierarchical name. `layer` is the owning
/// conv/BN layer (name minus the last component); `depth_index` orders
/// layers along the contracting, across and expanding path.
struct Parameter {
  std::string name;
  std::string layer;
  int depth_index = 0;
  Tensor tensor;
};

/// BN running statistics are state but not parameters; checkpoints carry them.
struct NamedBatchNorm {
  std::string name;
  std::shared_ptr<BatchNormState> state;
};

struct Conv2d {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;    // [C_out]
  std::size_t stride = 1;
  std::size_t padding = 0;

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
};

/// Creates and registers named layers. Each weight tensor is drawn from its
/// own generator seeded by (seed, name), so two networks built from configs
/// that share a parameter name also share its initial value.
class ParamFactory {
 public:
  explicit ParamFactory(std::uint64_t seed) : seed_(seed) {}

  /// He fan-in normal weights, zero bias. Padding is k/2.
  Conv2d conv(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t k,
              std::size_t stride = 1);
  std::shared_ptr<BatchNormState> batch_norm(const std::string& name, std::size_t channels);

  std::vector<Parameter>& parameters() { return params_; }
  std::vector<NamedBatchNorm>& batch_norms() { return bns_; }

 private:
  int next_depth() { return depth_++; }
  void add(const std::string& layer, const char* leaf, int depth, const Tensor& t);

  std::uint64_t seed_;
  int depth_ = 0;
  std::vector<Parameter> params_;
  std::vector<NamedBatchNorm> bns_;
};

}  // namespace resfcn
