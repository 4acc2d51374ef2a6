#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resfcn {

/// Fraction of positions where the two binary masks agree.
double pixel_accuracy(std::span<const double> pred, std::span<const double> truth);

/// 2*sum(p*y) + smooth over sum(p) + sum(y) + smooth; equals -dice_loss.
double soft_dice_coefficient(std::span<const double> prob, std::span<const double> truth,
                             double smooth = 1.0);

/// 4-connected components of the nonzero pixels of a binary H x W mask.
/// Background is 0; components are numbered 1.. in raster order of their
/// first pixel.
std::vector<int> connected_components(std::span<const double> mask, std::size_t height,
                                      std::size_t width);

/// Rand index restricted to pixel pairs where both truth labels are
/// foreground (nonzero): the fraction of those pairs on which `pred` and
/// `truth` agree about same-segment versus different-segment. Throws
/// ContractError when fewer than two truth pixels are foreground.
double rand_index_foreground(std::span<const int> pred, std::span<const int> truth);

}  // namespace resfcn
