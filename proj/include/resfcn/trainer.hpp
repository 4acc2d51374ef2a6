#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "resfcn/data.hpp"
#include "resfcn/network.hpp"
#include "resfcn/optimizer.hpp"
#include "resfcn/telemetry.hpp"

namespace resfcn {

enum class LossKind { kBce, kDice };
const char* to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct TrainConfig {
  LossKind loss = LossKind::kBce;
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  int epochs = 10;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  // Copied into the network config by callers that build the network.
  double dropout_rate = 0.2;
  double dice_smooth = 1.0;
  AugmentFlags augment;

  RmsPropConfig optimizer() const { return {learning_rate, weight_decay, rms_decay, rms_eps}; }
  void validate() const;
};

Tensor compute_loss(const Tensor& logits, const Tensor& labels, const TrainConfig& cfg);

struct EpochStats {
  double mean_loss = 0.0;      // mean over batches
  double mean_accuracy = 0.0;  // pixel accuracy of logit > 0, mean over batches
};

/// One pass over `data` in a shuffle order drawn from (seed, epoch). Per
/// batch: augment, forward in train mode, loss, backward, snapshot,
/// RMSprop step, telemetry. Throws TrainingError on a non-finite loss.
EpochStats train_epoch(Network& net, const std::vector<Sample>& data, const TrainConfig& cfg,
                       OptimizerState& opt, UpdateTelemetry* telemetry, int epoch);

/// Eval-mode loss and accuracy, averaged over samples, no augmentation.
EpochStats evaluate(const Network& net, const std::vector<Sample>& data, const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct FitResult {
  std::vector<EpochRecord> history;
  std::vector<UpdateRecord> updates;
  NetworkState best_state;
  int best_epoch = 0;  // 0 = initialization
  double best_val_loss = 0.0;
  double best_train_loss = 0.0;
};

/// Trains for cfg.epochs, keeping the state with the strictly lowest
/// validation loss (the initialization when epochs == 0). The network is
/// left holding the best state on return.
FitResult fit(Network& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const TrainConfig& cfg);

/// First epoch (1-based) whose validation loss is <= threshold, if any.
std::optional<int> epochs_to_reach(const std::vector<EpochRecord>& history, double threshold);

/// Header: epoch,train_loss,val_loss,train_acc,val_acc.
std::string history_csv_text(const std::vector<EpochRecord>& history);
void export_history_csv(const std::vector<EpochRecord>& history, const std::string& path);
std::vector<EpochRecord> read_history_csv(const std::string& path);

/// Averages sigmoid outputs of `n_samples` passes with dropout active at
/// `rate` and every other layer in eval mode. rate == 0 gives the single
/// deterministic eval pass.
Tensor mc_dropout_predict(const Network& net, const Tensor& x, int n_samples, double rate, Rng& rng);

/// Sigmoid of one deterministic eval pass.
Tensor predict(const Network& net, const Tensor& x);

}  // namespace resfcn
