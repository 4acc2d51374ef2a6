#pragma once

#include "resfcn/tensor.hpp"

namespace resfcn {

/// Mean binary cross-entropy on logits, in the stable form
/// max(z,0) - z*y + log(1 + exp(-|z|)). Labels must be exactly 0 or 1.
Tensor bce_loss(const Tensor& logits, const Tensor& labels);

/// Negative smoothed Dice overlap on o = sigmoid(logits):
///   -(2 sum(o*y) + smooth) / (sum(o) + sum(y) + smooth)
Tensor dice_loss(const Tensor& logits, const Tensor& labels, double smooth = 1.0);

/// Same quantity as dice_loss but taking probabilities directly.
Tensor dice_loss_from_probabilities(const Tensor& probs, const Tensor& labels, double smooth = 1.0);

}  // namespace resfcn
