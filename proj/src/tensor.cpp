#include "resfcn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "resfcn/errors.hpp"

namespace resfcn {

namespace {
thread_local Precision g_precision = Precision::kFloat32;
thread_local bool g_grad_enabled = true;
}  // namespace

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

PrecisionScope::PrecisionScope(Precision p) : saved_(g_precision) { g_precision = p; }
PrecisionScope::~PrecisionScope() { g_precision = saved_; }

void round_to_precision(std::span<double> values) {
  if (g_precision == Precision::kFloat64) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }
bool grad_enabled() { return g_grad_enabled; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  const std::size_t n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(n, fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return impl_->node == nullptr; }

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a one-element loss, got shape " +
                        shape_string(shape()));
  }
  if (!impl_->requires_grad) {
    throw ContractError("backward() on a tensor detached from any differentiable input");
  }

  // Post-order DFS gives a topological order with inputs before outputs.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> visited;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(impl_.get(), 0);
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [t, next] = stack.back();
    const std::size_t n_inputs = t->node ? t->node->inputs.size() : 0;
    if (next < n_inputs) {
      detail::TensorImpl* child = t->node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(t);
      stack.pop_back();
    }
  }

  // Gradients of this pass live in a local table and are added to the
  // persistent buffers at the end, so repeated passes accumulate exactly.
  std::unordered_map<detail::TensorImpl*, std::vector<double>> local;
  local[impl_.get()].assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* t = *it;
    auto found = local.find(t);
    if (found == local.end() || !t->node) continue;
    const std::vector<double>& grad_out = found->second;  // references survive rehashing
    detail::GradSlots slots;
    slots.reserve(t->node->inputs.size());
    for (const auto& input : t->node->inputs) {
      if (!input->requires_grad) {
        slots.emplace_back();
        continue;
      }
      auto& buf = local[input.get()];
      if (buf.empty()) buf.assign(input->data.size(), 0.0);
      slots.emplace_back(buf);
    }
    t->node->backward(grad_out, slots);
  }

  for (detail::TensorImpl* t : order) {
    auto found = local.find(t);
    if (found == local.end()) continue;
    if (t->grad.empty()) {
      t->grad = std::move(found->second);
    } else {
      for (std::size_t i = 0; i < t->grad.size(); ++i) t->grad[i] += found->second[i];
    }
  }
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::clone() const {
  Tensor copy(impl_->shape, impl_->data);
  copy.impl_->requires_grad = impl_->requires_grad && is_leaf();
  return copy;
}

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   detail::BackwardFn backward) {
  round_to_precision(values);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  if (grad_enabled()) {
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      auto node = std::make_shared<detail::Node>();
      node->inputs.reserve(inputs.size());
      for (auto& t : inputs) node->inputs.push_back(t.impl());
      node->backward = std::move(backward);
      impl->node = std::move(node);
      impl->requires_grad = true;
    }
  }
  return Tensor(std::move(impl));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

}  // namespace resfcn
