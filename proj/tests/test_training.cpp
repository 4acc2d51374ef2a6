#include <gtest/gtest.h>

#include <cmath>

#include "resfcn/errors.hpp"
#include "resfcn/gradcheck.hpp"
#include "resfcn/losses.hpp"
#include "resfcn/optimizer.hpp"
#include "resfcn/presets.hpp"
#include "resfcn/trainer.hpp"

using namespace resfcn;

namespace {

Tensor vec(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor(Shape{1, 1, 1, n}, std::move(v));
}

// Parameter whose gradient is exactly `g`.
Parameter with_grad(std::vector<double> theta, const std::vector<double>& g) {
  const Shape shape{theta.size()};
  Parameter p{"l.weight", "l", 0, Tensor(shape, std::move(theta))};
  p.tensor.set_requires_grad();
  PrecisionScope f64(Precision::kFloat64);
  sum(mul(p.tensor, Tensor(Shape{g.size()}, g))).backward();
  return p;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

TrainConfig small_train(int epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 2;
  t.seed = 3;
  t.dropout_rate = 0.0;
  t.augment = AugmentFlags::all_standard();
  return t;
}

}  // namespace

TEST(Loss, BceAtZeroLogitIsLn2) {
  EXPECT_NEAR(bce_loss(vec({0, 0}), vec({1, 0})).item(), std::log(2.0), 1e-7);
}

TEST(Loss, BceLimits) {
  PrecisionScope f64(Precision::kFloat64);
  EXPECT_LT(bce_loss(vec({40, -40}), vec({1, 0})).item(), 1e-15);
  EXPECT_NEAR(bce_loss(vec({-40}), vec({1})).item(), 40.0, 1e-9);
  EXPECT_TRUE(std::isfinite(bce_loss(vec({-1000, 1000}), vec({1, 0})).item()));
}

TEST(Loss, BceMatchesDirectFormula) {
  PrecisionScope f64(Precision::kFloat64);
  Rng rng(4);
  std::normal_distribution<double> d(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> z(16), y(16);
    double ref = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
      z[i] = d(rng);
      y[i] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
      const double o = 1.0 / (1.0 + std::exp(-z[i]));
      ref -= y[i] * std::log(o) + (1.0 - y[i]) * std::log(1.0 - o);
    }
    EXPECT_NEAR(bce_loss(vec(z), vec(y)).item(), ref / 16.0, 1e-10);
  }
}

TEST(Loss, DiceExamples) {
  PrecisionScope f64(Precision::kFloat64);
  const Tensor y = vec({1, 1, 0, 0});
  EXPECT_NEAR(dice_loss_from_probabilities(y, y).item(), -1.0, 1e-12);
  // o = (1,0,0,0): -(2*1+1)/(1+2+1)
  EXPECT_NEAR(dice_loss_from_probabilities(vec({1, 0, 0, 0}), y).item(), -0.75, 1e-12);
  EXPECT_NEAR(dice_loss_from_probabilities(vec({1, 0, 0, 0}), y, 0.0).item(), -2.0 / 3.0, 1e-12);
  EXPECT_NEAR(dice_loss_from_probabilities(vec({1, 0}), vec({1, 1}), 0.0).item(), -2.0 / 3.0, 1e-12);
  EXPECT_NEAR(dice_loss_from_probabilities(vec({0, 0}), vec({0, 0})).item(), -1.0, 1e-12);
  EXPECT_THROW(dice_loss_from_probabilities(vec({0, 0}), vec({0, 0}), 0.0), DimensionError);
}

TEST(Loss, RangeProperties) {
  Rng rng(8);
  std::normal_distribution<double> d(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> z(9), y(9);
    for (std::size_t i = 0; i < 9; ++i) {
      z[i] = d(rng);
      y[i] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
    }
    EXPECT_GE(bce_loss(vec(z), vec(y)).item(), 0.0);
    const double dl = dice_loss(vec(z), vec(y)).item();
    EXPECT_GE(dl, -1.0);
    EXPECT_LE(dl, 0.0);
  }
}

TEST(Loss, NonBinaryLabelsRejected) {
  EXPECT_THROW(bce_loss(vec({0, 0}), vec({0.5, 1})), LabelError);
  EXPECT_THROW(bce_loss(vec({0, 0}), vec({0, 1, 1})), DimensionError);
}

TEST(RmsProp, OneStepExample) {
  std::vector<Parameter> p{with_grad({0.0}, {1.0})};
  OptimizerState st = OptimizerState::for_parameters(p);
  rmsprop_step(p, st, {0.001, 0.0, 0.9, 1e-8});
  EXPECT_NEAR(st.accumulators[0][0], 0.1, 1e-8);
  EXPECT_NEAR(p[0].tensor.data()[0], -0.001 / std::sqrt(0.1), 1e-9);
  EXPECT_NEAR(p[0].tensor.data()[0], -3.1623e-3, 1e-7);
}

TEST(RmsProp, ZeroGradientAndZeroDecayLeavesParameters) {
  std::vector<Parameter> p{with_grad({1.5, -2.0}, {0.0, 0.0})};
  OptimizerState st = OptimizerState::for_parameters(p);
  rmsprop_step(p, st, {0.001, 0.0, 0.9, 1e-8});
  EXPECT_EQ(values(p[0].tensor), (std::vector<double>{1.5, -2.0}));
}

TEST(RmsProp, WeightDecayShrinksTowardZero) {
  std::vector<Parameter> p{with_grad({2.0, -2.0}, {0.0, 0.0})};
  OptimizerState st = OptimizerState::for_parameters(p);
  rmsprop_step(p, st, {0.01, 0.1, 0.9, 1e-8});
  EXPECT_LT(p[0].tensor.data()[0], 2.0);
  EXPECT_GT(p[0].tensor.data()[1], -2.0);
}

TEST(RmsProp, CoordinatesAreIndependent) {
  std::vector<Parameter> joint{with_grad({0.3, -0.7, 1.1}, {0.5, -2.0, 0.01})};
  OptimizerState js = OptimizerState::for_parameters(joint);
  const RmsPropConfig cfg{0.01, 0.001, 0.9, 1e-8};
  for (int step = 0; step < 3; ++step) rmsprop_step(joint, js, cfg);
  const std::vector<double> th{0.3, -0.7, 1.1}, g{0.5, -2.0, 0.01};
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<Parameter> single{with_grad({th[i]}, {g[i]})};
    OptimizerState ss = OptimizerState::for_parameters(single);
    for (int step = 0; step < 3; ++step) rmsprop_step(single, ss, cfg);
    EXPECT_EQ(single[0].tensor.data()[0], joint[0].tensor.data()[i]);
  }
}

TEST(RmsProp, StateMismatchRejected) {
  std::vector<Parameter> p{with_grad({1.0}, {1.0})};
  OptimizerState st;
  EXPECT_THROW(rmsprop_step(p, st, {}), ContractError);
}

TEST(Trainer, ZeroLearningRateLeavesParametersAndTelemetryZero) {
  const auto data = generate_synthetic_em(1, 4, 16);
  Network net = build_network(toy_three_level_config(16, 4), 1);
  const NetworkState before = net.state();
  TrainConfig t = small_train(1);
  t.learning_rate = 0.0;
  OptimizerState opt = OptimizerState::for_parameters(net.parameters());
  UpdateTelemetry tel(net.parameters());
  train_epoch(net, data, t, opt, &tel, 1);
  EXPECT_EQ(net.state().parameters, before.parameters);
  for (const UpdateRecord& r : tel.close_epoch(1)) EXPECT_EQ(r.mean_abs_update, 0.0);
}

TEST(Trainer, FitIsDeterministic) {
  const auto data = generate_synthetic_em(2, 6, 16);
  const std::vector<Sample> train(data.begin(), data.begin() + 4), val(data.begin() + 4, data.end());
  auto run = [&] {
    Network net = build_network(toy_three_level_config(16, 4), 5);
    return fit(net, train, val, small_train(3));
  };
  const FitResult a = run(), b = run();
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.updates, b.updates);
  EXPECT_EQ(a.best_state.parameters, b.best_state.parameters);
}

TEST(Trainer, BestEpochIsTheMinimum) {
  const auto data = generate_synthetic_em(3, 6, 16);
  const std::vector<Sample> train(data.begin(), data.begin() + 4), val(data.begin() + 4, data.end());
  Network net = build_network(toy_three_level_config(16, 4), 6);
  const FitResult r = fit(net, train, val, small_train(4));
  ASSERT_EQ(r.history.size(), 4u);
  double lowest = r.history[0].val_loss;
  for (const EpochRecord& e : r.history) lowest = std::min(lowest, e.val_loss);
  ASSERT_GE(r.best_epoch, 1);
  EXPECT_EQ(r.best_val_loss, lowest);
  EXPECT_EQ(r.history[r.best_epoch - 1].val_loss, lowest);
  EXPECT_EQ(r.best_train_loss, r.history[r.best_epoch - 1].train_loss);
  EXPECT_EQ(net.state().parameters, r.best_state.parameters);
  EXPECT_EQ(evaluate(net, val, small_train(0)).mean_loss, lowest);
}

TEST(Trainer, ZeroEpochsKeepsInitialization) {
  const auto data = generate_synthetic_em(4, 3, 16);
  Network net = build_network(toy_one_level_config(16, 4), 1);
  const NetworkState init = net.state();
  const FitResult r = fit(net, {data[0], data[1]}, {data[2]}, small_train(0));
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.best_epoch, 0);
  EXPECT_EQ(r.best_state.parameters, init.parameters);
}

TEST(Trainer, EmptySetsRejected) {
  const auto data = generate_synthetic_em(4, 2, 16);
  Network net = build_network(toy_one_level_config(16, 4), 1);
  EXPECT_THROW(fit(net, data, {}, small_train(1)), ConfigError);
  EXPECT_THROW(fit(net, {}, data, small_train(1)), ConfigError);
  TrainConfig bad = small_train(1);
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  EXPECT_THROW(parse_loss_kind("hinge"), ConfigError);
}

TEST(Trainer, EpochsToReach) {
  std::vector<EpochRecord> h{{1, 0, 0.5, 0, 0}, {2, 0, 0.3, 0, 0}, {3, 0, 0.2, 0, 0}};
  EXPECT_EQ(epochs_to_reach(h, 0.3), 2);
  EXPECT_EQ(epochs_to_reach(h, 0.6), 1);
  EXPECT_FALSE(epochs_to_reach(h, 0.1).has_value());
}

TEST(Trainer, HistoryCsvRoundTrip) {
  std::vector<EpochRecord> h{{1, 0.7, 0.65, 0.5, 0.55}, {2, 0.1234567890123, 0.2, 0.9, 0.875}};
  EXPECT_EQ(history_csv_text(h).substr(0, 41), "epoch,train_loss,val_loss,train_acc,val_a");
  const std::string path = ::testing::TempDir() + "/resfcn_history.csv";
  export_history_csv(h, path);
  EXPECT_EQ(read_history_csv(path), h);
  EXPECT_THROW(read_history_csv("/nonexistent/h.csv"), IoError);
}

TEST(McDropout, RateZeroEqualsDeterministicPass) {
  NetworkConfig cfg = toy_one_level_config(16, 4);
  cfg.dropout_rate = 0.2;
  const Network net = build_network(cfg, 2);
  const Tensor x = generate_synthetic_em(1, 1, 16)[0].image;
  const Tensor batch(Shape{1, 1, 16, 16}, values(x));
  Rng rng(1);
  EXPECT_EQ(values(mc_dropout_predict(net, batch, 4, 0.0, rng)), values(predict(net, batch)));
}

TEST(McDropout, ReproducibleAndVarianceShrinks) {
  NetworkConfig cfg = toy_one_level_config(16, 4);
  const Network net = build_network(cfg, 2);
  const Tensor batch(Shape{1, 1, 16, 16}, values(generate_synthetic_em(2, 1, 16)[0].image));
  Rng r1(9), r2(9);
  EXPECT_EQ(values(mc_dropout_predict(net, batch, 1, 0.2, r1)), values(mc_dropout_predict(net, batch, 1, 0.2, r2)));

  // Variance over repeated n-sample means, averaged over pixels.
  auto spread = [&](int n) {
    Rng rng(derive_seed(5, {static_cast<std::uint64_t>(n)}));
    const int reps = 40;
    std::vector<double> s(batch.numel()), s2(batch.numel());
    for (int k = 0; k < reps; ++k) {
      const Tensor m = mc_dropout_predict(net, batch, n, 0.2, rng);
      for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] += m.data()[i];
        s2[i] += m.data()[i] * m.data()[i];
      }
    }
    double v = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) v += s2[i] / reps - (s[i] / reps) * (s[i] / reps);
    return v / static_cast<double>(s.size());
  };
  const double v1 = spread(1), v4 = spread(4), v16 = spread(16);
  EXPECT_GT(v1, v4);
  EXPECT_GT(v4, v16);
  EXPECT_NEAR(v1 / v16, 16.0, 8.0);
  Rng rng(1);
  EXPECT_THROW(mc_dropout_predict(net, batch, 0, 0.2, rng), ContractError);
}
