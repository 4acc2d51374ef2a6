#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "resfcn/blocks.hpp"
#include "resfcn/config.hpp"

namespace resfcn {

/// Called after each row with the row index and its output.
using RowObserver = std::function<void(std::size_t row, const Tensor& output)>;

/// Parameter values plus BN running statistics, in network order.
struct NetworkState {
  std::vector<std::vector<double>> parameters;
  std::vector<std::vector<double>> running_means;
  std::vector<std::vector<double>> running_vars;
};

/// Residual FCN assembled from a NetworkConfig. Parameters are owned here;
/// forward() builds a fresh graph on every call.
class Network {
 public:
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) noexcept;
  Network& operator=(Network&&) noexcept;
  ~Network();

  const NetworkConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const std::vector<NamedBatchNorm>& batch_norms() const { return bns_; }
  const Parameter* find_parameter(const std::string& name) const;

  /// Logits of shape N x 1 x H x W.
  Tensor forward(const Tensor& x, const ForwardContext& ctx,
                 const RowObserver& observer = nullptr) const;

  NetworkState state() const;
  void load_state(const NetworkState& state);
  void zero_grads();

 private:
  friend Network build_network(const NetworkConfig& cfg, std::uint64_t seed);
  struct Stage;
  Network();

  NetworkConfig cfg_;
  std::uint64_t seed_ = 0;
  std::vector<Stage> stages_;
  std::vector<Parameter> params_;
  std::vector<NamedBatchNorm> bns_;
};

/// Validates `cfg` and initializes every parameter from (seed, name):
/// He fan-in normal conv weights, zero biases, unit gamma, zero beta.
Network build_network(const NetworkConfig& cfg, std::uint64_t seed);

Tensor forward_pass(const Network& net, const Tensor& x, Mode mode, Rng& rng);

/// Scalar parameter count including BN affine terms, excluding running statistics.
std::size_t param_count(const Network& net);

// Binary checkpoint: magic "RESFCNCK", u32 version, config text, then named
// parameter and running-statistic blobs (f64 little endian). See
// docs/formats.md.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);
std::string checkpoint_bytes(const Network& net);
Network checkpoint_from_bytes(const std::string& bytes);

}  // namespace resfcn
