#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "resfcn/blocks.hpp"

namespace resfcn {

enum class RowKind { kConv3x3, kConv1x1, kSimple, kBasic, kBottleneck };
enum class PathRole { kContracting, kAcross, kExpanding, kClassifier };

struct Resolution {
  std::size_t height = 0;
  std::size_t width = 0;
  bool operator==(const Resolution&) const = default;
};

std::string to_string(Resolution r);
const char* to_string(RowKind k);
const char* to_string(PathRole r);

/// One architecture row: `repetitions` units of `kind` whose first unit
/// moves from the previous row's resolution to `out_resolution`.
struct ArchRow {
  std::string name;
  RowKind kind = RowKind::kSimple;
  Resolution out_resolution;
  std::size_t out_width = 1;
  std::size_t repetitions = 1;
  PathRole role = PathRole::kContracting;
};

struct NetworkConfig {
  std::vector<ArchRow> rows;
  bool long_skips = true;
  bool short_skips = true;
  bool use_batch_norm = true;
  double dropout_rate = 0.0;
  Resolution input_resolution;
  std::size_t input_channels = 1;
};

/// The three skip-connection variants compared in the ablation, plus the
/// variant with neither skip type.
enum class SkipVariant { kLongAndShort, kShortOnly, kLongOnly, kNone };
const char* to_string(SkipVariant v);
NetworkConfig with_skips(NetworkConfig cfg, SkipVariant v);

/// Resolution of the input each row consumes.
Resolution row_input_resolution(const NetworkConfig& cfg, std::size_t row);
Resample row_resample(const NetworkConfig& cfg, std::size_t row);
std::size_t row_input_width(const NetworkConfig& cfg, std::size_t row);

/// Index of the contracting row whose output is summed into expanding row
/// `row`, or -1 when the row takes no long skip. Throws ConfigError when
/// long skips are on and no contracting row matches the row's input
/// resolution.
int long_skip_source(const NetworkConfig& cfg, std::size_t row);

/// Throws ConfigError describing the first violated constraint.
void validate(const NetworkConfig& cfg);

// INI-style text format; see configs/README.md for the grammar.
NetworkConfig parse_network_config(std::istream& in);
NetworkConfig parse_network_config_text(const std::string& text);
NetworkConfig load_network_config(const std::string& path);
std::string to_config_text(const NetworkConfig& cfg);

}  // namespace resfcn
