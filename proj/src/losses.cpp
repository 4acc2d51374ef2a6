#include "resfcn/losses.hpp"

#include <cmath>

#include "resfcn/errors.hpp"
#include "resfcn/ops.hpp"

namespace resfcn {

namespace {

void require_binary(const Tensor& labels, const char* op) {
  for (double v : labels.data()) {
    if (v != 0.0 && v != 1.0) {
      throw LabelError(std::string(op) + ": labels must be 0 or 1, found " + std::to_string(v));
    }
  }
}

}  // namespace

Tensor bce_loss(const Tensor& logits, const Tensor& labels) {
  require_same_shape(logits, labels, "bce_loss");
  require_binary(labels, "bce_loss");
  const auto z = logits.data();
  const auto y = labels.data();
  const double inv_n = 1.0 / static_cast<double>(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  auto iz = logits.impl();
  auto iy = labels.impl();
  return make_result(Shape{1}, {total * inv_n}, {logits, labels},
                     [iz, iy, inv_n](std::span<const double> g, const detail::GradSlots& slots) {
                       if (slots[0].empty()) return;
                       for (std::size_t i = 0; i < slots[0].size(); ++i) {
                         const double zi = iz->data[i];
                         const double s = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi))
                                                    : std::exp(zi) / (1.0 + std::exp(zi));
                         slots[0][i] += g[0] * inv_n * (s - iy->data[i]);
                       }
                     });
}

Tensor dice_loss_from_probabilities(const Tensor& probs, const Tensor& labels, double smooth) {
  require_same_shape(probs, labels, "dice_loss");
  if (smooth < 0.0) throw ConfigError("dice_loss: smoothing must be non-negative");
  const auto o = probs.data();
  const auto y = labels.data();
  double inter = 0.0, so = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    inter += o[i] * y[i];
    so += o[i];
    sy += y[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = so + sy + smooth;
  if (den == 0.0) throw DimensionError("dice_loss: empty prediction and mask with zero smoothing");
  auto iy = labels.impl();
  auto io = probs.impl();
  return make_result(Shape{1}, {-num / den}, {probs, labels},
                     [iy, io, num, den](std::span<const double> g, const detail::GradSlots& slots) {
                       // d/do_i of -num/den = -(2 y_i den - num) / den^2
                       for (std::size_t i = 0; i < slots[0].size(); ++i) {
                         slots[0][i] += -g[0] * (2.0 * iy->data[i] * den - num) / (den * den);
                       }
                       for (std::size_t i = 0; i < slots[1].size(); ++i) {
                         slots[1][i] += -g[0] * (2.0 * io->data[i] * den - num) / (den * den);
                       }
                     });
}

Tensor dice_loss(const Tensor& logits, const Tensor& labels, double smooth) {
  return dice_loss_from_probabilities(sigmoid(logits), labels, smooth);
}

}  // namespace resfcn
