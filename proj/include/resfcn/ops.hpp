#pragma once

#include <cstddef>
#include <cstdint>

#include "resfcn/rng.hpp"
#include "resfcn/tensor.hpp"

namespace resfcn {

enum class Mode { kTrain, kEval };
enum class Activation { kRelu, kSigmoid };

// Elementwise and reductions. Shapes must match exactly; there is no broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor activation(const Tensor& x, Activation kind);

/// Cross-correlation of an NCHW input with a [C_out, C_in, k, k] kernel.
/// `bias` may be undefined. Output side = floor((H + 2*padding - k) / stride) + 1.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

struct BatchNormState {
  Tensor gamma;  // [C]
  Tensor beta;   // [C]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels, double momentum = 0.1, double eps = 1e-5);
  std::size_t channels() const { return running_mean.size(); }
};

/// Per-channel normalization. Train mode uses batch statistics (biased
/// variance) and moves the running statistics toward them by `momentum`;
/// eval mode reads the running statistics only.
Tensor batch_norm(const Tensor& x, BatchNormState& state, Mode mode);

/// Inverted dropout: survivors are scaled by 1/(1-rate) in train mode so
/// eval mode is the identity.
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng);

/// Keeps every `factor`-th row and column starting at 0.
Tensor decimate_downsample(const Tensor& x, std::size_t factor);
/// Replicates each pixel into a factor x factor tile.
Tensor repeat_upsample(const Tensor& x, std::size_t factor);

/// While alive on a thread, relu() folds the sign pattern of its inputs into
/// a running hash. Finite-difference checks use it to tell when a
/// perturbation crossed a kink.
class ActivationPatternProbe {
 public:
  ActivationPatternProbe();
  ~ActivationPatternProbe();
  ActivationPatternProbe(const ActivationPatternProbe&) = delete;
  ActivationPatternProbe& operator=(const ActivationPatternProbe&) = delete;

  std::uint64_t hash() const;
  void reset();

 private:
  ActivationPatternProbe* saved_;
  std::uint64_t hash_;
  friend void probe_relu_pattern(std::span<const double> input);
};

}  // namespace resfcn
