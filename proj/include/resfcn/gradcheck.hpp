#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "resfcn/tensor.hpp"

namespace resfcn {

class NondeterminismError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose +/- perturbation changed some ReLU sign pattern. A
  // central difference across a kink is not a derivative, so they are
  // excluded from max_rel_error.
  std::size_t skipped_at_kinks = 0;
};

/// Scalar function of the current values of some tensors. It must rebuild
/// its graph on every call and reseed any generator it uses.
using ScalarFn = std::function<Tensor()>;

/// Compares the reverse-mode gradient of `f` with respect to each tensor in
/// `wrt` against central differences. Per coordinate:
///   |analytic - (f(x+eps) - f(x-eps)) / 2eps| / max(1, |analytic|)
/// Requires 64-bit precision mode.
GradCheckResult finite_diff_check(const ScalarFn& f, std::vector<Tensor> wrt, double eps = 1e-5);
GradCheckResult finite_diff_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

}  // namespace resfcn
