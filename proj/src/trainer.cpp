#include "resfcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "resfcn/errors.hpp"
#include "resfcn/losses.hpp"
#include "resfcn/metrics.hpp"

namespace resfcn {

const char* to_string(LossKind k) { return k == LossKind::kBce ? "bce" : "dice"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "bce") return LossKind::kBce;
  if (s == "dice") return LossKind::kDice;
  throw ConfigError("unknown loss '" + s + "' (expected bce or dice)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw ConfigError("rms decay must lie in [0, 1)");
  if (!(rms_eps > 0.0)) throw ConfigError("rms eps must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(dice_smooth >= 0.0)) throw ConfigError("dice smoothing must be non-negative");
}

Tensor compute_loss(const Tensor& logits, const Tensor& labels, const TrainConfig& cfg) {
  return cfg.loss == LossKind::kBce ? bce_loss(logits, labels) : dice_loss(logits, labels, cfg.dice_smooth);
}

namespace {

double logit_accuracy(const Tensor& logits, const Tensor& labels) {
  std::vector<double> pred(logits.numel());
  const auto z = logits.data();
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = z[i] > 0.0 ? 1.0 : 0.0;
  return pixel_accuracy(pred, labels.data());
}

std::string loss_tail(const std::vector<double>& losses) {
  std::ostringstream os;
  const std::size_t from = losses.size() > 5 ? losses.size() - 5 : 0;
  for (std::size_t i = from; i < losses.size(); ++i) os << (i > from ? ", " : "") << losses[i];
  return os.str();
}

Tensor single(const Tensor& plane) {
  return Tensor(Shape{1, plane.dim(0), plane.dim(1), plane.dim(2)},
                std::vector<double>(plane.data().begin(), plane.data().end()));
}

}  // namespace

EpochStats train_epoch(Network& net, const std::vector<Sample>& data, const TrainConfig& cfg,
                       OptimizerState& opt, UpdateTelemetry* telemetry, int epoch) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train_epoch: empty training set");
  const auto e = static_cast<std::uint64_t>(epoch);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, {e, 1}));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const RmsPropConfig rms = cfg.optimizer();
  std::vector<double> losses;
  double acc_sum = 0.0;
  std::size_t batch = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), start + cfg.batch_size);
    std::vector<Sample> augmented;
    std::vector<std::size_t> idx;
    for (std::size_t k = start; k < end; ++k) {
      Rng aug_rng(derive_seed(cfg.seed, {e, 2, order[k]}));
      augmented.push_back(augment_sample(data[order[k]], aug_rng, cfg.augment));
      idx.push_back(idx.size());
    }
    auto [x, y] = stack_batch(augmented, idx);

    Rng drop_rng(derive_seed(cfg.seed, {e, 3, batch}));
    ForwardContext ctx;
    ctx.mode = Mode::kTrain;
    ctx.rng = &drop_rng;
    const Tensor logits = net.forward(x, ctx);
    const Tensor loss = compute_loss(logits, y, cfg);
    const double value = loss.item();
    losses.push_back(value);
    if (!std::isfinite(value)) {
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                          std::to_string(batch) + "; recent batch losses: " + loss_tail(losses));
    }
    acc_sum += logit_accuracy(logits, y);

    loss.backward();
    std::optional<ParamSnapshot> before;
    if (telemetry) before = snapshot(net.parameters());
    rmsprop_step(net.parameters(), opt, rms);
    if (telemetry) telemetry->record_layer_updates(*before, snapshot(net.parameters()));
    net.zero_grads();
  }
  EpochStats stats;
  stats.mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
  stats.mean_accuracy = acc_sum / static_cast<double>(losses.size());
  return stats;
}

EpochStats evaluate(const Network& net, const std::vector<Sample>& data, const TrainConfig& cfg) {
  if (data.empty()) throw ConfigError("evaluate: empty dataset");
  NoGradGuard no_grad;
  ForwardContext ctx;
  ctx.mode = Mode::kEval;
  EpochStats stats;
  for (const Sample& s : data) {
    const Tensor logits = net.forward(single(s.image), ctx);
    const Tensor labels = single(s.mask);
    stats.mean_loss += compute_loss(logits, labels, cfg).item();
    stats.mean_accuracy += logit_accuracy(logits, labels);
  }
  stats.mean_loss /= static_cast<double>(data.size());
  stats.mean_accuracy /= static_cast<double>(data.size());
  return stats;
}

FitResult fit(Network& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const TrainConfig& cfg) {
  cfg.validate();
  if (val.empty()) throw ConfigError("fit: empty validation set");
  if (train.empty()) throw ConfigError("fit: empty training set");

  FitResult result;
  result.best_state = net.state();
  result.best_val_loss = std::numeric_limits<double>::infinity();
  if (cfg.epochs == 0) {
    const EpochStats v = evaluate(net, val, cfg);
    result.best_val_loss = v.mean_loss;
    result.best_train_loss = evaluate(net, train, cfg).mean_loss;
    return result;
  }

  OptimizerState opt = OptimizerState::for_parameters(net.parameters());
  UpdateTelemetry telemetry(net.parameters());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const EpochStats t = train_epoch(net, train, cfg, opt, &telemetry, epoch);
    const EpochStats v = evaluate(net, val, cfg);
    if (!std::isfinite(v.mean_loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(EpochRecord{epoch, t.mean_loss, v.mean_loss, t.mean_accuracy, v.mean_accuracy});
    const auto records = telemetry.close_epoch(epoch);
    result.updates.insert(result.updates.end(), records.begin(), records.end());
    if (v.mean_loss < result.best_val_loss) {
      result.best_val_loss = v.mean_loss;
      result.best_train_loss = t.mean_loss;
      result.best_epoch = epoch;
      result.best_state = net.state();
    }
  }
  net.load_state(result.best_state);
  return result;
}

std::optional<int> epochs_to_reach(const std::vector<EpochRecord>& history, double threshold) {
  for (const EpochRecord& r : history) {
    if (r.val_loss <= threshold) return r.epoch;
  }
  return std::nullopt;
}

std::string history_csv_text(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
  char buf[160];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss,
                  r.train_acc, r.val_acc);
    out += buf;
  }
  return out;
}

void export_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write history CSV " + path);
  out << history_csv_text(history);
  if (!out) throw IoError("failed writing history CSV " + path);
}

std::vector<EpochRecord> read_history_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open history CSV " + path);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,val_loss,train_acc,val_acc") {
    throw IoError(path + ": unexpected history CSV header");
  }
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    EpochRecord r;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &r.epoch, &r.train_loss, &r.val_loss, &r.train_acc,
                    &r.val_acc) != 5) {
      throw IoError(path + ": malformed history row '" + line + "'");
    }
    out.push_back(r);
  }
  return out;
}

Tensor predict(const Network& net, const Tensor& x) {
  NoGradGuard no_grad;
  ForwardContext ctx;
  ctx.mode = Mode::kEval;
  return sigmoid(net.forward(x, ctx));
}

Tensor mc_dropout_predict(const Network& net, const Tensor& x, int n_samples, double rate, Rng& rng) {
  if (n_samples < 1) throw ContractError("mc_dropout_predict needs at least one sample");
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("MC dropout rate must lie in [0, 1)");
  if (rate == 0.0) return predict(net, x);
  NoGradGuard no_grad;
  ForwardContext ctx;
  ctx.mode = Mode::kEval;
  ctx.rng = &rng;
  ctx.dropout_override = rate;
  std::vector<double> total(shape_numel(x.shape()) / x.dim(1), 0.0);
  Shape out_shape;
  for (int k = 0; k < n_samples; ++k) {
    const Tensor p = sigmoid(net.forward(x, ctx));
    out_shape = p.shape();
    if (total.size() != p.numel()) total.assign(p.numel(), 0.0);
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += p.data()[i];
  }
  for (double& v : total) v /= static_cast<double>(n_samples);
  return Tensor(out_shape, std::move(total));
}

}  // namespace resfcn
