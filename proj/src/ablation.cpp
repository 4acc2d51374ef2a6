#include "resfcn/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "resfcn/errors.hpp"

namespace resfcn {

namespace {

const char* method_name(SkipVariant v) {
  switch (v) {
    case SkipVariant::kLongAndShort: return "Model 1 (long and short skips)";
    case SkipVariant::kShortOnly: return "Model 2 (short skips only)";
    case SkipVariant::kLongOnly: return "Model 3 (long skips only)";
    case SkipVariant::kNone: return "No skips";
  }
  return "?";
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

const VariantOutcome& AblationReport::get(SkipVariant v) const {
  for (const VariantOutcome& o : variants) {
    if (o.variant == v) return o;
  }
  throw ContractError(std::string("ablation report has no variant ") + to_string(v));
}

std::string variant_label(SkipVariant v) {
  switch (v) {
    case SkipVariant::kLongAndShort: return "model1_long_short";
    case SkipVariant::kShortOnly: return "model2_short_only";
    case SkipVariant::kLongOnly: return "model3_long_only";
    case SkipVariant::kNone: return "no_skip";
  }
  return "unknown";
}

AblationReport run_ablation(const AblationOptions& opts) {
  opts.train.validate();
  validate(opts.network);
  const Resolution res = opts.network.input_resolution;
  if (res.height != res.width) throw ConfigError("ablation needs a square input resolution");
  if (opts.network.input_channels != 1) throw ConfigError("ablation data is single-channel");
  if (opts.train_count == 0 || opts.val_count == 0) throw ConfigError("ablation needs train and val samples");

  const std::uint64_t seed = opts.train.seed;
  const std::size_t total = opts.train_count + opts.val_count;
  const auto samples = generate_synthetic_em(derive_seed(seed, {hash_name("data")}), total, res.height);
  const DatasetSplit split =
      split_train_val(samples, static_cast<double>(opts.train_count) / static_cast<double>(total), seed);

  std::vector<SkipVariant> variants{SkipVariant::kLongAndShort, SkipVariant::kShortOnly, SkipVariant::kLongOnly};
  if (opts.include_no_skip) variants.push_back(SkipVariant::kNone);

  AblationReport report;
  report.threshold = opts.threshold;
  const std::uint64_t net_seed = derive_seed(seed, {hash_name("network")});
  for (SkipVariant v : variants) {
    NetworkConfig cfg = with_skips(opts.network, v);
    cfg.dropout_rate = opts.train.dropout_rate;
    Network net = build_network(cfg, net_seed);
    FitResult fr = fit(net, split.train, split.val, opts.train);
    VariantOutcome o;
    o.variant = v;
    o.best_epoch = fr.best_epoch;
    o.best_val_loss = fr.best_val_loss;
    o.best_train_loss = fr.best_train_loss;
    o.epochs_to_threshold = epochs_to_reach(fr.history, opts.threshold);
    o.deep_update_ratio = deep_update_ratio(fr.updates);
    o.history = std::move(fr.history);
    o.updates = std::move(fr.updates);
    report.variants.push_back(std::move(o));
  }
  return report;
}

double deep_update_ratio(const std::vector<UpdateRecord>& records) {
  std::map<int, std::vector<const UpdateRecord*>> by_epoch;
  for (const UpdateRecord& r : records) by_epoch[r.epoch].push_back(&r);
  if (by_epoch.empty()) return std::numeric_limits<double>::quiet_NaN();

  const int last = by_epoch.rbegin()->first;
  const int span = std::max(1, static_cast<int>(std::ceil(static_cast<double>(by_epoch.size()) / 4.0)));
  double sum = 0.0;
  int used = 0;
  for (auto& [epoch, layers] : by_epoch) {
    if (epoch <= last - span) continue;
    std::sort(layers.begin(), layers.end(),
              [](const UpdateRecord* a, const UpdateRecord* b) { return a->depth_index < b->depth_index; });
    const std::size_t n = layers.size();
    const double classifier = layers.back()->mean_abs_update;
    if (n < 2 || !(classifier > 0.0)) continue;
    // Rank by distance from the nearer end; ties go to the shallower index.
    std::vector<std::size_t> order(n - 1);
    for (std::size_t i = 0; i < n - 1; ++i) order[i] = i;
    auto centrality = [n](std::size_t i) { return std::min(i, n - 1 - i); };
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return centrality(a) > centrality(b); });
    const std::size_t take = std::max<std::size_t>(1, (n - 1 + 2) / 3);
    std::vector<double> deep;
    for (std::size_t k = 0; k < take; ++k) deep.push_back(layers[order[k]]->mean_abs_update);
    sum += median(deep) / classifier;
    ++used;
  }
  return used ? sum / used : std::numeric_limits<double>::quiet_NaN();
}

std::string comparison_csv_text(const AblationReport& report) {
  std::string out = "model,training_loss,validation_loss,best_epoch,epochs_to_threshold,deep_update_ratio\n";
  char buf[256];
  for (const VariantOutcome& o : report.variants) {
    const std::string reached = o.epochs_to_threshold ? std::to_string(*o.epochs_to_threshold) : "";
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%d,%s,%.17g\n", variant_label(o.variant).c_str(),
                  o.best_train_loss, o.best_val_loss, o.best_epoch, reached.c_str(), o.deep_update_ratio);
    out += buf;
  }
  return out;
}

std::string comparison_table_text(const AblationReport& report) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-32s | %-13s | %-15s | %s\n", "Method", "training loss", "validation loss",
                "epochs to val loss <= threshold");
  out += buf;
  out += std::string(32, '-') + "-+-" + std::string(13, '-') + "-+-" + std::string(15, '-') + "-+-" +
         std::string(31, '-') + "\n";
  for (const VariantOutcome& o : report.variants) {
    const std::string reached = o.epochs_to_threshold ? std::to_string(*o.epochs_to_threshold) : "not reached";
    std::snprintf(buf, sizeof buf, "%-32s | %13.4f | %15.4f | %s\n", method_name(o.variant), o.best_train_loss,
                  o.best_val_loss, reached.c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "threshold: %.4f\n", report.threshold);
  out += buf;
  return out;
}

void write_ablation_outputs(const AblationReport& report, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  const std::filesystem::path base(dir);
  for (const VariantOutcome& o : report.variants) {
    const std::string label = variant_label(o.variant);
    write_text(base / ("history_" + label + ".csv"), history_csv_text(o.history));
    write_text(base / ("updates_" + label + ".csv"), update_csv_text(o.updates));
  }
  write_text(base / "comparison.csv", comparison_csv_text(report));
  write_text(base / "comparison.txt", comparison_table_text(report));
}

}  // namespace resfcn
