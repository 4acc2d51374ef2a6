#include "resfcn/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "resfcn/errors.hpp"

namespace resfcn {

ParamSnapshot snapshot(std::span<const Parameter> params) {
  ParamSnapshot s;
  s.names.reserve(params.size());
  s.values.reserve(params.size());
  for (const Parameter& p : params) {
    s.names.push_back(p.name);
    s.values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  }
  return s;
}

UpdateTelemetry::UpdateTelemetry(std::span<const Parameter> params) {
  for (const Parameter& p : params) {
    param_names_.push_back(p.name);
    auto it = std::find(layer_names_.begin(), layer_names_.end(), p.layer);
    if (it == layer_names_.end()) {
      layer_names_.push_back(p.layer);
      layer_depths_.push_back(p.depth_index);
      layer_sizes_.push_back(0);
      it = layer_names_.end() - 1;
    }
    const auto layer = static_cast<std::size_t>(it - layer_names_.begin());
    param_layer_.push_back(layer);
    layer_sizes_[layer] += p.tensor.numel();
  }
  epoch_sums_.assign(layer_names_.size(), 0.0);
  last_step_.assign(layer_names_.size(), 0.0);
}

void UpdateTelemetry::record_layer_updates(const ParamSnapshot& before, const ParamSnapshot& after) {
  if (before.names != param_names_ || after.names != param_names_) {
    throw ContractError("telemetry: snapshots are not aligned with the tracked parameters");
  }
  std::vector<double> abs_sum(layer_names_.size(), 0.0);
  for (std::size_t k = 0; k < param_names_.size(); ++k) {
    const auto& b = before.values[k];
    const auto& a = after.values[k];
    if (a.size() != b.size()) throw ContractError("telemetry: size mismatch for " + param_names_[k]);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    abs_sum[param_layer_[k]] += s;
  }
  for (std::size_t l = 0; l < layer_names_.size(); ++l) {
    last_step_[l] = abs_sum[l] / static_cast<double>(layer_sizes_[l]);
    epoch_sums_[l] += last_step_[l];
  }
  ++steps_;
}

std::vector<UpdateRecord> UpdateTelemetry::close_epoch(int epoch) {
  std::vector<UpdateRecord> out;
  out.reserve(layer_names_.size());
  for (std::size_t l = 0; l < layer_names_.size(); ++l) {
    const double mean = steps_ == 0 ? 0.0 : epoch_sums_[l] / static_cast<double>(steps_);
    out.push_back(UpdateRecord{epoch, layer_names_[l], layer_depths_[l], mean});
  }
  std::stable_sort(out.begin(), out.end(), [](const UpdateRecord& a, const UpdateRecord& b) {
    return a.depth_index < b.depth_index;
  });
  std::fill(epoch_sums_.begin(), epoch_sums_.end(), 0.0);
  steps_ = 0;
  return out;
}

std::string update_csv_text(std::span<const UpdateRecord> records) {
  std::vector<UpdateRecord> sorted(records.begin(), records.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const UpdateRecord& a, const UpdateRecord& b) {
    return a.epoch != b.epoch ? a.epoch < b.epoch : a.depth_index < b.depth_index;
  });
  std::string out = "epoch,layer_name,depth_index,mean_abs_update\n";
  char buf[64];
  for (const UpdateRecord& r : sorted) {
    std::snprintf(buf, sizeof buf, "%.17g", r.mean_abs_update);
    out += std::to_string(r.epoch) + "," + r.layer_name + "," + std::to_string(r.depth_index) + "," +
           buf + "\n";
  }
  return out;
}

void export_update_csv(std::span<const UpdateRecord> records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write telemetry CSV " + path);
  out << update_csv_text(records);
  if (!out) throw IoError("failed writing telemetry CSV " + path);
}

std::vector<UpdateRecord> read_update_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open telemetry CSV " + path);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,layer_name,depth_index,mean_abs_update") {
    throw IoError(path + ": unexpected telemetry CSV header");
  }
  std::vector<UpdateRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string epoch, name, depth, value;
    if (!std::getline(row, epoch, ',') || !std::getline(row, name, ',') ||
        !std::getline(row, depth, ',') || !std::getline(row, value)) {
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed telemetry row");
    }
    try {
      out.push_back(UpdateRecord{std::stoi(epoch), name, std::stoi(depth), std::stod(value)});
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed telemetry row");
    }
  }
  return out;
}

}  // namespace resfcn
