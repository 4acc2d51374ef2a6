#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "resfcn/errors.hpp"
#include "resfcn/metrics.hpp"
#include "resfcn/optimizer.hpp"
#include "resfcn/presets.hpp"
#include "resfcn/network.hpp"
#include "resfcn/telemetry.hpp"

using namespace resfcn;

namespace {

std::vector<Parameter> two_layers() {
  return {{"a.weight", "a", 0, Tensor(Shape{2}, std::vector<double>{1, 2})},
          {"b.weight", "b", 1, Tensor(Shape{3}, std::vector<double>{0, 0, 0})}};
}

}  // namespace

TEST(Metrics, PixelAccuracy) {
  const std::vector<double> y{1, 0, 1, 1};
  EXPECT_EQ(pixel_accuracy(y, y), 1.0);
  EXPECT_EQ(pixel_accuracy(std::vector<double>{1, 1, 1, 0}, y), 0.5);
  EXPECT_THROW(pixel_accuracy(std::vector<double>{1}, y), DimensionError);
}

TEST(Metrics, SoftDice) {
  const std::vector<double> y{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(soft_dice_coefficient(y, y), 1.0);
  EXPECT_DOUBLE_EQ(soft_dice_coefficient(std::vector<double>{1, 0, 0, 0}, y), 0.75);
  EXPECT_DOUBLE_EQ(soft_dice_coefficient(std::vector<double>{0, 0}, std::vector<double>{0, 0}), 1.0);
}

TEST(Metrics, RandIndexExamples) {
  const std::vector<int> truth{1, 1, 2};
  EXPECT_EQ(rand_index_foreground(truth, truth), 1.0);
  // Pairs (0,1) same/same agree, (0,2) and (1,2) differ in truth but pred merges them.
  EXPECT_DOUBLE_EQ(rand_index_foreground(std::vector<int>{5, 5, 5}, truth), 1.0 / 3.0);
  // Background truth pixels do not count.
  EXPECT_EQ(rand_index_foreground(std::vector<int>{1, 1, 2, 7}, std::vector<int>{1, 1, 2, 0}), 1.0);
  EXPECT_THROW(rand_index_foreground(std::vector<int>{1, 0}, std::vector<int>{1, 0}), ContractError);
}

TEST(Metrics, RandIndexIgnoresLabelNames) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> pred(20), truth(20);
    for (int& v : pred) v = static_cast<int>(rng() % 4);
    for (int& v : truth) v = 1 + static_cast<int>(rng() % 3);
    std::vector<int> renamed = pred;
    for (int& v : renamed) v = (v * 7 + 3) % 11;
    EXPECT_EQ(rand_index_foreground(pred, truth), rand_index_foreground(renamed, truth));
  }
}

TEST(Metrics, ConnectedComponents) {
  // 1 1 0
  // 0 0 0
  // 1 0 1
  const std::vector<double> m{1, 1, 0, 0, 0, 0, 1, 0, 1};
  EXPECT_EQ(connected_components(m, 3, 3), (std::vector<int>{1, 1, 0, 0, 0, 0, 2, 0, 3}));
  // Diagonal neighbours are not connected.
  EXPECT_EQ(connected_components(std::vector<double>{1, 0, 0, 1}, 2, 2), (std::vector<int>{1, 0, 0, 2}));
}

TEST(Telemetry, NoChangeGivesZeros) {
  auto p = two_layers();
  UpdateTelemetry tel(p);
  const ParamSnapshot s = snapshot(p);
  tel.record_layer_updates(s, s);
  for (const UpdateRecord& r : tel.close_epoch(1)) EXPECT_EQ(r.mean_abs_update, 0.0);
}

TEST(Telemetry, MeanAbsUpdateExample) {
  auto p = two_layers();
  UpdateTelemetry tel(p);
  const ParamSnapshot before = snapshot(p);
  p[0].tensor.data()[0] = 1.1;
  p[0].tensor.data()[1] = 1.8;
  tel.record_layer_updates(before, snapshot(p));
  const auto recs = tel.close_epoch(3);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].layer_name, "a");
  EXPECT_EQ(recs[0].epoch, 3);
  EXPECT_NEAR(recs[0].mean_abs_update, 0.15, 1e-12);
  EXPECT_EQ(recs[1].mean_abs_update, 0.0);
}

TEST(Telemetry, AveragesOverSteps) {
  auto p = two_layers();
  UpdateTelemetry tel(p);
  ParamSnapshot s0 = snapshot(p);
  p[1].tensor.data()[0] = 3.0;  // mean |d| = 1
  ParamSnapshot s1 = snapshot(p);
  tel.record_layer_updates(s0, s1);
  tel.record_layer_updates(s1, s1);
  EXPECT_NEAR(tel.close_epoch(1)[1].mean_abs_update, 0.5, 1e-15);
  // Accumulators reset after closing.
  tel.record_layer_updates(s1, s1);
  EXPECT_EQ(tel.close_epoch(2)[1].mean_abs_update, 0.0);
}

TEST(Telemetry, MisalignedSnapshotsRejected) {
  auto p = two_layers();
  UpdateTelemetry tel(p);
  ParamSnapshot s = snapshot(p);
  ParamSnapshot bad = s;
  std::swap(bad.names[0], bad.names[1]);
  EXPECT_THROW(tel.record_layer_updates(s, bad), ContractError);
}

TEST(Telemetry, ConservationAndOptimizerAlgebra) {
  PrecisionScope f64(Precision::kFloat64);
  Network net = build_network(toy_three_level_config(16, 4), 3);
  Rng rng(2);
  std::vector<double> img(2 * 16 * 16);
  for (double& v : img) v = uniform01(rng);
  for (Parameter& p : net.parameters()) p.tensor.set_requires_grad();
  Rng drop(1);
  sum(forward_pass(net, Tensor(Shape{2, 1, 16, 16}, img), Mode::kTrain, drop)).backward();

  OptimizerState opt = OptimizerState::for_parameters(net.parameters());
  UpdateTelemetry tel(net.parameters());
  const ParamSnapshot before = snapshot(net.parameters());
  const RmsPropConfig cfg{0.003, 0.0, 0.9, 1e-8};
  rmsprop_step(net.parameters(), opt, cfg);
  const ParamSnapshot after = snapshot(net.parameters());
  tel.record_layer_updates(before, after);

  double total = 0.0;
  for (std::size_t k = 0; k < before.values.size(); ++k) {
    for (std::size_t i = 0; i < before.values[k].size(); ++i) total += std::abs(after.values[k][i] - before.values[k][i]);
  }
  double weighted = 0.0;
  for (std::size_t l = 0; l < tel.layer_names().size(); ++l) weighted += tel.layer_sizes()[l] * tel.last_step()[l];
  EXPECT_NEAR(weighted, total, 1e-6);

  // Recompute each layer's mean |lr g / (sqrt(acc) + eps)| from gradients and accumulators.
  std::map<std::string, std::pair<double, std::size_t>> per_layer;
  const auto& params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& slot = per_layer[params[k].layer];
    const auto g = params[k].tensor.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      slot.first += std::abs(cfg.learning_rate * g[i] / (std::sqrt(opt.accumulators[k][i]) + cfg.eps));
      ++slot.second;
    }
  }
  for (std::size_t l = 0; l < tel.layer_names().size(); ++l) {
    const auto& [s, n] = per_layer.at(tel.layer_names()[l]);
    EXPECT_NEAR(tel.last_step()[l], s / static_cast<double>(n), 1e-12) << tel.layer_names()[l];
  }
}

TEST(Telemetry, CsvOrderingAndRoundTrip) {
  EXPECT_EQ(update_csv_text({}), "epoch,layer_name,depth_index,mean_abs_update\n");
  std::vector<UpdateRecord> recs{{2, "b", 1, 0.5}, {1, "b", 1, 0.25}, {2, "a", 0, 1e-9}, {1, "a", 0, 0.1}};
  const std::string path = ::testing::TempDir() + "/resfcn_updates.csv";
  export_update_csv(recs, path);
  const auto back = read_update_csv(path);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back[0], (UpdateRecord{1, "a", 0, 0.1}));
  EXPECT_EQ(back[1], (UpdateRecord{1, "b", 1, 0.25}));
  EXPECT_EQ(back[2], (UpdateRecord{2, "a", 0, 1e-9}));
  EXPECT_EQ(back[3], (UpdateRecord{2, "b", 1, 0.5}));
  EXPECT_THROW(export_update_csv(recs, "/nonexistent/dir/u.csv"), IoError);
}
