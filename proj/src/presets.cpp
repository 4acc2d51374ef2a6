#include "resfcn/presets.hpp"

#include "resfcn/errors.hpp"

namespace resfcn {

namespace {

ArchRow row(const char* name, RowKind kind, std::size_t res, std::size_t width, std::size_t reps,
            PathRole role) {
  return ArchRow{name, kind, {res, res}, width, reps, role};
}

}  // namespace

NetworkConfig toy_three_level_config(std::size_t size, std::size_t width, std::size_t repetitions) {
  if (size < 8 || size % 4 != 0) throw ConfigError("toy network size must be a multiple of 4, >= 8");
  NetworkConfig cfg;
  cfg.input_resolution = {size, size};
  cfg.input_channels = 1;
  const std::size_t s = size;
  cfg.rows = {
      row("Down1", RowKind::kConv3x3, s, width, 1, PathRole::kContracting),
      row("Down2", RowKind::kSimple, s / 2, width, repetitions, PathRole::kContracting),
      row("Down3", RowKind::kSimple, s / 4, width, repetitions, PathRole::kContracting),
      row("Across", RowKind::kSimple, s / 4, width, repetitions, PathRole::kAcross),
      row("Up1", RowKind::kSimple, s / 2, width, repetitions, PathRole::kExpanding),
      row("Up2", RowKind::kSimple, s, width, repetitions, PathRole::kExpanding),
      row("Up3", RowKind::kConv3x3, s, width, 1, PathRole::kExpanding),
      row("Classifier", RowKind::kConv1x1, s, 1, 1, PathRole::kClassifier),
  };
  validate(cfg);
  return cfg;
}

NetworkConfig toy_one_level_config(std::size_t size, std::size_t width) {
  NetworkConfig cfg;
  cfg.input_resolution = {size, size};
  cfg.input_channels = 1;
  cfg.rows = {
      row("Down1", RowKind::kSimple, size / 2, width, 1, PathRole::kContracting),
      row("Across", RowKind::kSimple, size / 2, width, 1, PathRole::kAcross),
      row("Up1", RowKind::kSimple, size, width, 1, PathRole::kExpanding),
      row("Classifier", RowKind::kConv1x1, size, 1, 1, PathRole::kClassifier),
  };
  validate(cfg);
  return cfg;
}

}  // namespace resfcn
