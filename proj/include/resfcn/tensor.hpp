#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace resfcn {

// Values are always stored as double. In kFloat32 mode every forward result
// and every optimizer write is rounded to the nearest float, so arithmetic
// behaves like single precision at the storage boundaries.
enum class Precision { kFloat32, kFloat64 };

Precision precision();
void set_precision(Precision p);

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

inline double round_to_precision(double v, Precision p) {
  return p == Precision::kFloat32 ? static_cast<double>(static_cast<float>(v)) : v;
}
void round_to_precision(std::span<double> values);

/// While alive, operators record no graph nodes on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};
bool grad_enabled();

using Shape = std::vector<std::size_t>;
std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

// Gradient slots handed to a node's backward function, one per input.
// A slot is empty when that input does not require a gradient.
using GradSlots = std::vector<std::span<double>>;
using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSlots& grad_in)>;

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

struct Node {
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

}  // namespace detail

/// Shared handle to an N-dimensional array with an optional place in a
/// reverse-mode differentiation graph. Copies alias the same storage; use
/// clone() or detach() for an independent value.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse-mode pass from a one-element tensor. Gradients are added to
  /// existing buffers; call zero_grad() between passes to reset.
  void backward() const;

  Tensor detach() const;
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>, detail::BackwardFn);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Builds an operator result. Values are rounded to the active precision;
/// a graph node is attached when gradients are enabled and some input
/// requires them.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   detail::BackwardFn backward);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace resfcn
