#pragma once

#include <span>
#include <string>
#include <vector>

#include "resfcn/layers.hpp"

namespace resfcn {

struct UpdateRecord {
  int epoch = 0;
  std::string layer_name;
  int depth_index = 0;
  double mean_abs_update = 0.0;

  bool operator==(const UpdateRecord&) const = default;
};

/// Copy of parameter values, aligned with a parameter list by name.
struct ParamSnapshot {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
};
ParamSnapshot snapshot(std::span<const Parameter> params);

/// Accumulates, per layer, the mean absolute parameter change of each step
/// and emits the average over an epoch's steps when the epoch is closed.
class UpdateTelemetry {
 public:
  explicit UpdateTelemetry(std::span<const Parameter> params);

  /// Throws ContractError when the snapshots are not name-aligned with the
  /// parameters this accumulator was built for.
  void record_layer_updates(const ParamSnapshot& before, const ParamSnapshot& after);

  /// One record per layer in depth order; resets the step accumulators.
  std::vector<UpdateRecord> close_epoch(int epoch);

  /// Per-layer mean |delta| of the most recent step, in layer order.
  const std::vector<double>& last_step() const { return last_step_; }
  const std::vector<std::string>& layer_names() const { return layer_names_; }
  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }

 private:
  std::vector<std::string> param_names_;
  std::vector<std::size_t> param_layer_;  // parameter index -> layer index
  std::vector<std::string> layer_names_;
  std::vector<int> layer_depths_;
  std::vector<std::size_t> layer_sizes_;
  std::vector<double> epoch_sums_;
  std::vector<double> last_step_;
  std::size_t steps_ = 0;
};

/// Header: epoch,layer_name,depth_index,mean_abs_update. Rows sorted by
/// (epoch, depth_index); values printed with 17 significant digits.
void export_update_csv(std::span<const UpdateRecord> records, const std::string& path);
std::string update_csv_text(std::span<const UpdateRecord> records);
std::vector<UpdateRecord> read_update_csv(const std::string& path);

}  // namespace resfcn
