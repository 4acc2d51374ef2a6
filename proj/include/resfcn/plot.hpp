#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resfcn/telemetry.hpp"
#include "resfcn/trainer.hpp"

namespace resfcn {

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

/// Binary PPM (P6).
void write_ppm(const std::string& path, const RgbImage& image);

/// Two stacked panels: loss (top) and accuracy (bottom) against epoch.
/// Training curves are blue, validation curves orange.
RgbImage render_history_plot(const std::vector<EpochRecord>& history, std::size_t width = 640,
                             std::size_t height = 480);

/// One row per layer (depth increasing downwards), one column per epoch,
/// colour from log10(mean_abs_update) scaled between the extremes.
RgbImage render_update_heatmap(const std::vector<UpdateRecord>& records, std::size_t cell = 6);

}  // namespace resfcn
