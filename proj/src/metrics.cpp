#include "resfcn/metrics.hpp"

#include <map>
#include <string>

#include "resfcn/errors.hpp"

namespace resfcn {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": length mismatch " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

double pairs(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double pixel_accuracy(std::span<const double> pred, std::span<const double> truth) {
  require_same_length(pred.size(), truth.size(), "pixel_accuracy");
  if (pred.empty()) throw DimensionError("pixel_accuracy: empty masks");
  std::size_t same = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) same += (pred[i] != 0.0) == (truth[i] != 0.0);
  return static_cast<double>(same) / static_cast<double>(pred.size());
}

double soft_dice_coefficient(std::span<const double> prob, std::span<const double> truth,
                             double smooth) {
  require_same_length(prob.size(), truth.size(), "soft_dice_coefficient");
  double inter = 0.0, sp = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    inter += prob[i] * truth[i];
    sp += prob[i];
    sy += truth[i];
  }
  return (2.0 * inter + smooth) / (sp + sy + smooth);
}

std::vector<int> connected_components(std::span<const double> mask, std::size_t height,
                                      std::size_t width) {
  require_same_length(mask.size(), height * width, "connected_components");
  std::vector<int> labels(mask.size(), 0);
  std::vector<std::size_t> stack;
  int next = 0;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (mask[start] == 0.0 || labels[start] != 0) continue;
    labels[start] = ++next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const std::size_t i = p / width, j = p % width;
      auto visit = [&](std::size_t q) {
        if (mask[q] != 0.0 && labels[q] == 0) {
          labels[q] = next;
          stack.push_back(q);
        }
      };
      if (i > 0) visit(p - width);
      if (i + 1 < height) visit(p + width);
      if (j > 0) visit(p - 1);
      if (j + 1 < width) visit(p + 1);
    }
  }
  return labels;
}

double rand_index_foreground(std::span<const int> pred, std::span<const int> truth) {
  require_same_length(pred.size(), truth.size(), "rand_index_foreground");
  // Contingency counts over truth-foreground pixels:
  // agreeing pairs = C(n,2) - sum_t C(a_t,2) - sum_p C(b_p,2) + 2 sum_tp C(n_tp,2)
  std::map<int, double> by_truth, by_pred;
  std::map<std::pair<int, int>, double> joint;
  double n = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0) continue;
    n += 1.0;
    by_truth[truth[i]] += 1.0;
    by_pred[pred[i]] += 1.0;
    joint[{truth[i], pred[i]}] += 1.0;
  }
  if (n < 2.0) {
    throw ContractError("rand_index_foreground: undefined with fewer than two foreground pixels");
  }
  double same_truth = 0.0, same_pred = 0.0, same_both = 0.0;
  for (const auto& [id, c] : by_truth) same_truth += pairs(c);
  for (const auto& [id, c] : by_pred) same_pred += pairs(c);
  for (const auto& [id, c] : joint) same_both += pairs(c);
  const double total = pairs(n);
  return (total - same_truth - same_pred + 2.0 * same_both) / total;
}

}  // namespace resfcn
