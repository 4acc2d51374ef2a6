// resfcn: train, evaluate and ablate residual FCNs from the command line.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "resfcn/ablation.hpp"
#include "resfcn/errors.hpp"
#include "resfcn/gradient_suite.hpp"
#include "resfcn/metrics.hpp"
#include "resfcn/plot.hpp"
#include "resfcn/presets.hpp"
#include "resfcn/trainer.hpp"

namespace fs = std::filesystem;
using namespace resfcn;

namespace {

constexpr const char* kVersion = "1.0.0";

using Manifest = std::vector<std::pair<std::string, std::string>>;

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void add_network(Manifest& m, const NetworkConfig& cfg) {
  m.emplace_back("network.input_channels", std::to_string(cfg.input_channels));
  m.emplace_back("network.input_resolution", to_string(cfg.input_resolution));
  m.emplace_back("network.long_skips", cfg.long_skips ? "true" : "false");
  m.emplace_back("network.short_skips", cfg.short_skips ? "true" : "false");
  m.emplace_back("network.batch_norm", cfg.use_batch_norm ? "true" : "false");
  m.emplace_back("network.dropout", real(cfg.dropout_rate));
  for (const ArchRow& r : cfg.rows) {
    const std::string p = "row." + r.name + ".";
    m.emplace_back(p + "block", to_string(r.kind));
    m.emplace_back(p + "resolution", to_string(r.out_resolution));
    m.emplace_back(p + "width", std::to_string(r.out_width));
    m.emplace_back(p + "repetitions", std::to_string(r.repetitions));
    m.emplace_back(p + "path", to_string(r.role));
  }
}

void add_train(Manifest& m, const TrainConfig& t) {
  m.emplace_back("train.loss", to_string(t.loss));
  m.emplace_back("train.learning_rate", real(t.learning_rate));
  m.emplace_back("train.weight_decay", real(t.weight_decay));
  m.emplace_back("train.rms_decay", real(t.rms_decay));
  m.emplace_back("train.rms_eps", real(t.rms_eps));
  m.emplace_back("train.epochs", std::to_string(t.epochs));
  m.emplace_back("train.batch_size", std::to_string(t.batch_size));
  m.emplace_back("train.seed", std::to_string(t.seed));
  m.emplace_back("train.dropout", real(t.dropout_rate));
  m.emplace_back("train.dice_smooth", real(t.dice_smooth));
  m.emplace_back("augment.flip", t.augment.flip ? "true" : "false");
  m.emplace_back("augment.rotate90", t.augment.rotate90 ? "true" : "false");
  m.emplace_back("augment.rotate_small", t.augment.rotate_small ? "true" : "false");
  m.emplace_back("augment.shear", t.augment.shear ? "true" : "false");
  m.emplace_back("augment.elastic", t.augment.elastic ? "true" : "false");
}

// key = value per line, in insertion order; no timestamps so reruns match.
void write_manifest(const std::string& dir, const std::string& command, const Manifest& entries) {
  std::string text = "# resfcn run manifest\ncommand = " + command + "\nversion = " + kVersion + "\n";
  for (const auto& [k, v] : entries) text += k + " = " + v + "\n";
  write_file(fs::path(dir) / "manifest.txt", text);
}

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::optional<int> epochs;
  std::string out = "resfcn_out";
};

void add_common(CLI::App* cmd, Common& c, bool with_epochs = true) {
  cmd->add_option("--config", c.config, "network config file (INI)");
  cmd->add_option("--seed", c.seed, "run seed")->capture_default_str();
  if (with_epochs) cmd->add_option("--epochs", c.epochs, "training epochs");
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

struct TrainFlags {
  std::string loss = "bce";
  double lr = 1e-3;
  double weight_decay = 1e-3;
  std::size_t batch_size = 4;
  std::optional<double> dropout;
  bool no_augment = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--loss", f.loss, "bce or dice")->capture_default_str();
  cmd->add_option("--lr", f.lr, "RMSprop learning rate")->capture_default_str();
  cmd->add_option("--weight-decay", f.weight_decay, "L2 weight decay")->capture_default_str();
  cmd->add_option("--batch-size", f.batch_size, "mini-batch size")->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "dropout rate (default: the config's)");
  cmd->add_flag("--no-augment", f.no_augment, "disable augmentation");
}

TrainConfig make_train_config(const Common& c, const TrainFlags& f, const NetworkConfig& net, int default_epochs) {
  TrainConfig t;
  t.loss = parse_loss_kind(f.loss);
  t.learning_rate = f.lr;
  t.weight_decay = f.weight_decay;
  t.batch_size = f.batch_size;
  t.epochs = c.epochs.value_or(default_epochs);
  t.seed = c.seed;
  t.dropout_rate = f.dropout.value_or(net.dropout_rate);
  t.augment = f.no_augment ? AugmentFlags{} : AugmentFlags::all_standard();
  t.validate();
  return t;
}

struct DataFlags {
  std::string data;
  std::size_t synth_count = 60;
  double train_fraction = 25.0 / 30.0;
};

void add_data_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--data", d.data, "dataset directory (images/ and masks/); synthetic data when omitted");
  cmd->add_option("--synth-count", d.synth_count, "synthetic sample count")->capture_default_str();
  cmd->add_option("--train-fraction", d.train_fraction, "share of samples used for training")
      ->capture_default_str();
}

std::vector<Sample> load_samples(const DataFlags& d, const NetworkConfig& net, std::uint64_t seed) {
  if (!d.data.empty()) return load_image_stack(d.data);
  const Resolution r = net.input_resolution;
  if (r.height != r.width) throw ConfigError("synthetic data needs a square input resolution");
  return generate_synthetic_em(derive_seed(seed, {hash_name("data")}), d.synth_count, r.height);
}

void add_data_manifest(Manifest& m, const DataFlags& d, std::size_t train, std::size_t val) {
  m.emplace_back("data.source", d.data.empty() ? "synthetic" : d.data);
  if (d.data.empty()) m.emplace_back("data.synth_count", std::to_string(d.synth_count));
  m.emplace_back("data.train_fraction", real(d.train_fraction));
  m.emplace_back("data.train_samples", std::to_string(train));
  m.emplace_back("data.val_samples", std::to_string(val));
}

NetworkConfig resolve_config(const Common& c, NetworkConfig fallback) {
  return c.config.empty() ? fallback : load_network_config(c.config);
}

int run_train(const Common& c, const TrainFlags& f, const DataFlags& d) {
  NetworkConfig net_cfg = resolve_config(c, toy_three_level_config(64, 16));
  TrainConfig t = make_train_config(c, f, net_cfg, 10);
  net_cfg.dropout_rate = t.dropout_rate;
  const DatasetSplit split = split_train_val(load_samples(d, net_cfg, c.seed), d.train_fraction, c.seed);
  Network net = build_network(net_cfg, derive_seed(c.seed, {hash_name("network")}));
  ensure_dir(c.out);
  Manifest m;
  m.emplace_back("config", c.config.empty() ? "(built-in toy)" : c.config);
  add_network(m, net_cfg);
  add_train(m, t);
  add_data_manifest(m, d, split.train.size(), split.val.size());
  m.emplace_back("parameters", std::to_string(param_count(net)));
  write_manifest(c.out, "train", m);

  const FitResult r = fit(net, split.train, split.val, t);
  const fs::path out(c.out);
  save_checkpoint(net, (out / "checkpoint.bin").string());
  export_history_csv(r.history, (out / "history.csv").string());
  export_update_csv(r.updates, (out / "updates.csv").string());
  std::printf("epochs %d, best epoch %d, best val loss %.6f, train loss there %.6f\n", t.epochs, r.best_epoch,
              r.best_val_loss, r.best_train_loss);
  return 0;
}

struct EvalFlags {
  std::string checkpoint;
  int mc_samples = 0;
  double mc_rate = 0.2;
};

int run_eval(const Common& c, const EvalFlags& e, const DataFlags& d, bool all_samples) {
  if (e.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  Network net = load_checkpoint(e.checkpoint);
  const std::vector<Sample> samples = load_samples(d, net.config(), c.seed);
  const std::vector<Sample> data = all_samples ? samples : split_train_val(samples, d.train_fraction, c.seed).val;
  if (data.empty()) throw ConfigError("eval: no samples");
  TrainConfig tc;
  const EpochStats stats = evaluate(net, data, tc);

  double dice = 0.0, acc = 0.0, rand = 0.0;
  std::size_t rand_n = 0;
  Rng rng(derive_seed(c.seed, {hash_name("mc")}));
  for (const Sample& s : data) {
    const Tensor x(Shape{1, s.image.dim(0), s.image.dim(1), s.image.dim(2)},
                   std::vector<double>(s.image.data().begin(), s.image.data().end()));
    const Tensor p = e.mc_samples > 0 ? mc_dropout_predict(net, x, e.mc_samples, e.mc_rate, rng) : predict(net, x);
    std::vector<double> bin(p.numel());
    for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = p.data()[i] > 0.5 ? 1.0 : 0.0;
    dice += soft_dice_coefficient(p.data(), s.mask.data());
    acc += pixel_accuracy(bin, s.mask.data());
    const std::size_t h = s.mask.dim(1), w = s.mask.dim(2);
    const auto truth = connected_components(s.mask.data(), h, w);
    std::size_t fg = 0;
    for (int v : truth) fg += v != 0;
    if (fg >= 2) {
      rand += rand_index_foreground(connected_components(bin, h, w), truth);
      ++rand_n;
    }
  }
  const double n = static_cast<double>(data.size());
  Manifest report{{"samples", std::to_string(data.size())},
                  {"bce_loss", real(stats.mean_loss)},
                  {"pixel_accuracy", real(acc / n)},
                  {"soft_dice", real(dice / n)},
                  {"rand_index_foreground", rand_n ? real(rand / static_cast<double>(rand_n)) : "undefined"},
                  {"mc_samples", std::to_string(e.mc_samples)},
                  {"mc_rate", real(e.mc_rate)}};
  ensure_dir(c.out);
  std::string text;
  for (const auto& [k, v] : report) text += k + " = " + v + "\n";
  write_file(fs::path(c.out) / "metrics.txt", text);
  std::cout << text;

  Manifest m{{"checkpoint", e.checkpoint}, {"seed", std::to_string(c.seed)}};
  add_network(m, net.config());
  add_data_manifest(m, d, 0, data.size());
  m.emplace_back("eval.split", all_samples ? "all" : "validation");
  write_manifest(c.out, "eval", m);
  return 0;
}

struct AblateFlags {
  double threshold = 0.25;
  std::size_t train_count = 50;
  std::size_t val_count = 10;
  bool models_only = false;
};

int run_ablate(const Common& c, const TrainFlags& f, const AblateFlags& a) {
  const NetworkConfig net_cfg = resolve_config(c, toy_three_level_config(64, 8, 9));
  AblationOptions opts;
  opts.network = net_cfg;
  opts.train = make_train_config(c, f, net_cfg, 30);
  opts.train_count = a.train_count;
  opts.val_count = a.val_count;
  opts.threshold = a.threshold;
  opts.include_no_skip = !a.models_only;
  ensure_dir(c.out);
  Manifest m;
  m.emplace_back("config", c.config.empty() ? "(built-in deep ablation)" : c.config);
  add_network(m, net_cfg);
  add_train(m, opts.train);
  m.emplace_back("ablation.train_count", std::to_string(a.train_count));
  m.emplace_back("ablation.val_count", std::to_string(a.val_count));
  m.emplace_back("ablation.threshold", real(a.threshold));
  m.emplace_back("ablation.include_no_skip", opts.include_no_skip ? "true" : "false");
  write_manifest(c.out, "ablate", m);

  const AblationReport report = run_ablation(opts);
  write_ablation_outputs(report, c.out);
  std::cout << comparison_table_text(report);
  return 0;
}

int run_gradcheck(const Common& c, int seeds, const std::string& filter, bool write_out) {
  GradSuiteOptions opts;
  opts.seeds = seeds;
  const auto results = run_gradient_suite(opts, [&](const std::string& name) {
    return filter.empty() || name.find(filter) != std::string::npos;
  });
  if (results.empty()) throw ConfigError("no gradient case matches '" + filter + "'");
  std::string csv = "case,seeds,checked,skipped_at_kinks,max_rel_error,passed\n";
  bool ok = true;
  for (const GradCaseResult& r : results) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%d,%zu,%zu,%.6g,%s\n", r.name.c_str(), r.seeds, r.checked,
                  r.skipped_at_kinks, r.worst_error, r.passed ? "true" : "false");
    csv += buf;
    std::printf("%-4s %-32s max rel error %.3g over %zu coordinates (%zu skipped at kinks)\n",
                r.passed ? "ok" : "FAIL", r.name.c_str(), r.worst_error, r.checked, r.skipped_at_kinks);
    ok = ok && r.passed;
  }
  if (write_out) {
    ensure_dir(c.out);
    write_file(fs::path(c.out) / "gradcheck.csv", csv);
    write_manifest(c.out, "gradcheck",
                   {{"seeds", std::to_string(seeds)},
                    {"filter", filter},
                    {"eps", real(opts.eps)},
                    {"tolerance", real(opts.tolerance)},
                    {"max_kink_fraction", real(opts.max_kink_fraction)}});
  }
  if (!ok) std::fprintf(stderr, "gradcheck: finite-difference check failed\n");
  return ok ? 0 : 1;
}

int run_synth(const Common& c, std::size_t count, std::size_t size) {
  const auto samples = generate_synthetic_em(c.seed, count, size);
  write_image_stack(c.out, samples);
  write_manifest(c.out, "synth",
                 {{"seed", std::to_string(c.seed)},
                  {"count", std::to_string(count)},
                  {"size", std::to_string(size)},
                  {"sites_per_sample", std::to_string(synthetic_site_count(size))}});
  std::printf("wrote %zu samples to %s\n", count, c.out.c_str());
  return 0;
}

int run_plot(const Common& c, const std::string& history, const std::string& updates) {
  if (history.empty() && updates.empty()) throw ConfigError("plot needs --history and/or --updates");
  ensure_dir(c.out);
  const fs::path out(c.out);
  if (!history.empty()) write_ppm((out / "history.ppm").string(), render_history_plot(read_history_csv(history)));
  if (!updates.empty()) {
    write_ppm((out / "updates.ppm").string(), render_update_heatmap(read_update_csv(updates)));
  }
  write_manifest(c.out, "plot", {{"history", history}, {"updates", updates}});
  return 0;
}

int run_params(const Common& c) {
  if (c.config.empty()) throw ConfigError("params needs --config");
  const NetworkConfig cfg = load_network_config(c.config);
  const Network net = build_network(cfg, c.seed);
  std::map<std::string, std::size_t> per_row;
  for (const Parameter& p : net.parameters()) {
    std::string row = p.name.rfind("longskip.", 0) == 0 ? p.name.substr(9) : p.name;
    row = row.substr(0, row.find('.'));
    per_row[row] += p.tensor.numel();
  }
  for (const ArchRow& r : cfg.rows) std::printf("%s\t%zu\n", r.name.c_str(), per_row[r.name]);
  std::printf("%zu\n", param_count(net));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual fully convolutional segmentation networks: training, evaluation and ablation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common common;
  TrainFlags train_flags;
  DataFlags data_flags;

  auto* train = app.add_subcommand("train", "train a network and write checkpoint, history and telemetry");
  add_common(train, common);
  add_train_flags(train, train_flags);
  add_data_flags(train, data_flags);

  EvalFlags eval_flags;
  bool eval_all = false;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint and write a metrics report");
  add_common(eval, common, false);
  add_data_flags(eval, data_flags);
  eval->add_option("--checkpoint", eval_flags.checkpoint, "checkpoint written by train")->required();
  eval->add_option("--mc-samples", eval_flags.mc_samples, "MC-dropout passes (0 = deterministic)")
      ->capture_default_str();
  eval->add_option("--mc-rate", eval_flags.mc_rate, "MC-dropout rate")->capture_default_str();
  eval->add_flag("--all", eval_all, "score every sample instead of the validation split");

  AblateFlags ablate_flags;
  auto* ablate = app.add_subcommand("ablate", "compare long+short, short-only, long-only and no-skip variants");
  add_common(ablate, common);
  add_train_flags(ablate, train_flags);
  ablate->add_option("--threshold", ablate_flags.threshold, "validation loss for epochs-to-threshold")
      ->capture_default_str();
  ablate->add_option("--train-count", ablate_flags.train_count, "synthetic training samples")
      ->capture_default_str();
  ablate->add_option("--val-count", ablate_flags.val_count, "synthetic validation samples")
      ->capture_default_str();
  ablate->add_flag("--models-only", ablate_flags.models_only, "skip the variant without any skips");

  int grad_seeds = 100;
  std::string grad_filter;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite; exit 1 on failure");
  add_common(gradcheck, common, false);
  gradcheck->add_option("--seeds", grad_seeds, "random seeds per case")->capture_default_str();
  gradcheck->add_option("--filter", grad_filter, "only cases whose name contains this text");

  std::size_t synth_count = 60, synth_size = 64;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset (images/ and masks/)");
  add_common(synth, common, false);
  synth->add_option("--count", synth_count, "number of samples")->capture_default_str();
  synth->add_option("--size", synth_size, "side length, a power of two >= 16")->capture_default_str();

  std::string plot_history, plot_updates;
  auto* plot = app.add_subcommand("plot", "render history curves and update heatmaps as PPM images");
  add_common(plot, common, false);
  plot->add_option("--history", plot_history, "history CSV");
  plot->add_option("--updates", plot_updates, "update telemetry CSV");

  auto* params = app.add_subcommand("params", "print per-row and total parameter counts");
  add_common(params, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train) return run_train(common, train_flags, data_flags);
    if (*eval) return run_eval(common, eval_flags, data_flags, eval_all);
    if (*ablate) return run_ablate(common, train_flags, ablate_flags);
    if (*gradcheck) return run_gradcheck(common, grad_seeds, grad_filter, gradcheck->count("--out") > 0);
    if (*synth) return run_synth(common, synth_count, synth_size);
    if (*plot) return run_plot(common, plot_history, plot_updates);
    if (*params) return run_params(common);
  } catch (const IoError& e) {
    std::cerr << "resfcn: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "resfcn: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
