#pragma once

#include <cstddef>

#include "resfcn/config.hpp"

namespace resfcn {

/// Three resolution levels (size, size/2, size/4) built from simple blocks,
/// with a conv3x3 stem and head:
///   Down1 conv3x3 @size, Down2..Down3 simple, Across simple,
///   Up1..Up2 simple, Up3 conv3x3 @size, Classifier conv1x1.
NetworkConfig toy_three_level_config(std::size_t size, std::size_t width, std::size_t repetitions = 1);

/// One down level, one across row, one up row, all simple blocks.
NetworkConfig toy_one_level_config(std::size_t size, std::size_t width);

}  // namespace resfcn
