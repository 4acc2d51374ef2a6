#pragma once

#include <optional>
#include <string>
#include <vector>

#include "resfcn/config.hpp"
#include "resfcn/trainer.hpp"

namespace resfcn {

struct AblationOptions {
  NetworkConfig network;  // skip toggles are overridden per variant
  TrainConfig train;      // train.seed is the shared run seed
  std::size_t train_count = 50;
  std::size_t val_count = 10;
  double threshold = 0.25;  // validation loss used for epochs-to-threshold
  bool include_no_skip = true;
};

struct VariantOutcome {
  SkipVariant variant = SkipVariant::kLongAndShort;
  std::vector<EpochRecord> history;
  std::vector<UpdateRecord> updates;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double best_train_loss = 0.0;
  std::optional<int> epochs_to_threshold;
  double deep_update_ratio = 0.0;
};

struct AblationReport {
  double threshold = 0.0;
  std::vector<VariantOutcome> variants;
  const VariantOutcome& get(SkipVariant v) const;
};

/// File-name stem for a variant: model1_long_short, model2_short_only,
/// model3_long_only, no_skip.
std::string variant_label(SkipVariant v);

/// Trains every variant from the same initialization (parameters shared by
/// name) on the same synthetic data, shuffle order and augmentation draws.
/// The dataset is 64x64-style synthetic EM at the network's input size.
AblationReport run_ablation(const AblationOptions& opts);

/// Median mean_abs_update over the central third of layers (ranked by
/// distance from the nearer end of the network) divided by the classifier
/// layer's update, averaged over the last quarter of epochs. NaN when the
/// classifier never moved.
double deep_update_ratio(const std::vector<UpdateRecord>& records);

/// Header: model,training_loss,validation_loss,best_epoch,epochs_to_threshold,deep_update_ratio.
/// epochs_to_threshold is empty when the threshold was never reached.
std::string comparison_csv_text(const AblationReport& report);
/// Fixed-width text table: Method | training loss | validation loss.
std::string comparison_table_text(const AblationReport& report);

/// Writes history_<label>.csv, updates_<label>.csv, comparison.csv and
/// comparison.txt into `dir` (created if missing).
void write_ablation_outputs(const AblationReport& report, const std::string& dir);

}  // namespace resfcn
