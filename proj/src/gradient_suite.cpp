#include "resfcn/gradient_suite.hpp"

#include <algorithm>
#include <map>

#include "resfcn/blocks.hpp"
#include "resfcn/gradcheck.hpp"
#include "resfcn/losses.hpp"
#include "resfcn/network.hpp"
#include "resfcn/presets.hpp"

namespace resfcn {

namespace {

using CaseFn = std::function<GradCheckResult(std::uint64_t seed, double eps)>;

Tensor random_normal(Rng& rng, Shape shape, double stddev = 1.0) {
  std::normal_distribution<double> d(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = d(rng);
  return Tensor(std::move(shape), std::move(v));
}

Tensor random_binary(Rng& rng, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = uniform01(rng) < 0.5 ? 1.0 : 0.0;
  return Tensor(std::move(shape), std::move(v));
}

// sum(op(x) * r): a scalar whose gradient exercises every output element.
Tensor project(const Tensor& out, const Tensor& r) { return sum(mul(out, r)); }

CaseFn unary_case(std::function<Tensor(const Tensor&)> op, Shape shape) {
  return [op, shape](std::uint64_t seed, double eps) {
    Rng rng(seed);
    Tensor x = random_normal(rng, shape);
    const Tensor probe = op(x.detach());
    const Tensor r = random_normal(rng, probe.shape());
    return finite_diff_check([&] { return project(op(x), r); }, x, eps);
  };
}

CaseFn conv_case(std::size_t c_in, std::size_t c_out, std::size_t k, std::size_t stride, std::size_t side) {
  return [=](std::uint64_t seed, double eps) {
    Rng rng(seed);
    Tensor x = random_normal(rng, {2, c_in, side, side});
    Tensor w = random_normal(rng, {c_out, c_in, k, k}, 0.5);
    Tensor b = random_normal(rng, {c_out});
    const std::size_t out_side = (side + 2 * (k / 2) - k) / stride + 1;
    const Tensor r = random_normal(rng, {2, c_out, out_side, out_side});
    return finite_diff_check([&] { return project(conv2d(x, w, b, stride, k / 2), r); }, {x, w, b}, eps);
  };
}

CaseFn batch_norm_case(Mode mode) {
  return [mode](std::uint64_t seed, double eps) {
    Rng rng(seed);
    Tensor x = random_normal(rng, {3, 2, 3, 3}, 2.0);
    BatchNormState state(2);
    state.gamma = random_normal(rng, {2});
    state.beta = random_normal(rng, {2});
    for (double& v : state.running_mean) v = random_normal(rng, {1}).item();
    for (double& v : state.running_var) v = 0.5 + uniform01(rng);
    const Tensor r = random_normal(rng, {3, 2, 3, 3});
    return finite_diff_check([&] { return project(batch_norm(x, state, mode), r); },
                             {x, state.gamma, state.beta}, eps);
  };
}

CaseFn block_case(BlockKind kind, Resample resample, bool skip) {
  return [=](std::uint64_t seed, double eps) {
    Rng rng(seed);
    BlockOpts opts;
    opts.in_channels = 4;
    opts.out_channels = 8;
    opts.resample = resample;
    opts.use_batch_norm = true;
    opts.dropout_rate = 0.2;
    opts.use_short_skip = skip;
    ParamFactory factory(seed);
    const auto block = make_block(kind, "b", opts, factory);
    const std::size_t side = resample == Resample::kUp ? 2 : 4;
    const std::size_t out_side = resample == Resample::kUp ? 4 : resample == Resample::kDown ? 2 : 4;
    Tensor x = random_normal(rng, {2, 4, side, side});
    const Tensor r = random_normal(rng, {2, 8, out_side, out_side});
    std::vector<Tensor> wrt{x};
    for (const Parameter& p : factory.parameters()) wrt.push_back(p.tensor);
    const std::uint64_t drop_seed = derive_seed(seed, {7});
    return finite_diff_check(
        [&] {
          Rng drop(drop_seed);
          ForwardContext ctx{Mode::kTrain, &drop, std::nullopt};
          return project(block->forward(x, ctx), r);
        },
        wrt, eps);
  };
}

std::vector<std::pair<std::string, CaseFn>> build_cases() {
  std::vector<std::pair<std::string, CaseFn>> cases;
  const Shape small{2, 2, 3, 3};
  cases.emplace_back("op/add", [small](std::uint64_t seed, double eps) {
    Rng rng(seed);
    Tensor a = random_normal(rng, small), b = random_normal(rng, small);
    const Tensor r = random_normal(rng, small);
    return finite_diff_check([&] { return project(add(a, b), r); }, {a, b}, eps);
  });
  cases.emplace_back("op/mul", [small](std::uint64_t seed, double eps) {
    Rng rng(seed);
    Tensor a = random_normal(rng, small), b = random_normal(rng, small);
    const Tensor r = random_normal(rng, small);
    return finite_diff_check([&] { return project(mul(a, b), r); }, {a, b}, eps);
  });
  cases.emplace_back("op/scale_mean", unary_case([](const Tensor& x) { return mean(scale(mul(x, x), 1.7)); }, small));
  cases.emplace_back("op/relu", unary_case([](const Tensor& x) { return relu(x); }, small));
  cases.emplace_back("op/sigmoid", unary_case([](const Tensor& x) { return sigmoid(x); }, small));
  cases.emplace_back("op/conv2d_3x3", conv_case(3, 4, 3, 1, 8));
  cases.emplace_back("op/conv2d_3x3_stride2", conv_case(3, 4, 3, 2, 6));
  cases.emplace_back("op/conv2d_1x1", conv_case(3, 2, 1, 1, 4));
  cases.emplace_back("op/batch_norm_train", batch_norm_case(Mode::kTrain));
  cases.emplace_back("op/batch_norm_eval", batch_norm_case(Mode::kEval));
  cases.emplace_back("op/dropout_train", [small](std::uint64_t seed, double eps) {
    Rng rng(seed);
    Tensor x = random_normal(rng, small);
    const Tensor r = random_normal(rng, small);
    return finite_diff_check(
        [&] {
          Rng drop(seed + 1);
          return project(dropout(x, 0.3, Mode::kTrain, drop), r);
        },
        x, eps);
  });
  cases.emplace_back("op/decimate", unary_case([](const Tensor& x) { return decimate_downsample(x, 2); }, {2, 2, 4, 4}));
  cases.emplace_back("op/repeat", unary_case([](const Tensor& x) { return repeat_upsample(x, 2); }, small));

  for (BlockKind kind : {BlockKind::kSimple, BlockKind::kBasic, BlockKind::kBottleneck}) {
    for (Resample resample : {Resample::kNone, Resample::kDown, Resample::kUp}) {
      for (bool skip : {true, false}) {
        cases.emplace_back(std::string("block/") + to_string(kind) + "/" + to_string(resample) +
                               (skip ? "/skip" : "/noskip"),
                           block_case(kind, resample, skip));
      }
    }
  }

  cases.emplace_back("loss/bce", [](std::uint64_t seed, double eps) {
    Rng rng(seed);
    Tensor z = random_normal(rng, {2, 1, 4, 4}, 2.0);
    const Tensor y = random_binary(rng, {2, 1, 4, 4});
    return finite_diff_check([&] { return bce_loss(z, y); }, z, eps);
  });
  cases.emplace_back("loss/dice", [](std::uint64_t seed, double eps) {
    Rng rng(seed);
    Tensor z = random_normal(rng, {2, 1, 4, 4}, 2.0);
    const Tensor y = random_binary(rng, {2, 1, 4, 4});
    return finite_diff_check([&] { return dice_loss(z, y, 1.0); }, z, eps);
  });

  cases.emplace_back("network/toy3", [](std::uint64_t seed, double eps) {
    Rng rng(seed);
    NetworkConfig cfg = toy_three_level_config(8, 4);
    cfg.dropout_rate = 0.1;
    Network net = build_network(cfg, seed);
    Tensor x = random_normal(rng, {2, 1, 8, 8});
    const Tensor y = random_binary(rng, {2, 1, 8, 8});
    std::vector<Tensor> wrt{x};
    for (const Parameter& p : net.parameters()) wrt.push_back(p.tensor);
    const std::uint64_t drop_seed = derive_seed(seed, {11});
    return finite_diff_check(
        [&] {
          Rng drop(drop_seed);
          ForwardContext ctx{Mode::kTrain, &drop, std::nullopt};
          return bce_loss(net.forward(x, ctx), y);
        },
        wrt, eps);
  });
  return cases;
}

}  // namespace

std::vector<std::string> gradient_case_names() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : build_cases()) names.push_back(name);
  return names;
}

std::vector<GradCaseResult> run_gradient_suite(const GradSuiteOptions& opts,
                                               const std::function<bool(const std::string&)>& filter) {
  PrecisionScope f64(Precision::kFloat64);
  std::vector<GradCaseResult> results;
  for (const auto& [name, fn] : build_cases()) {
    if (filter && !filter(name)) continue;
    GradCaseResult r;
    r.name = name;
    for (int s = 0; s < opts.seeds; ++s) {
      const GradCheckResult g = fn(derive_seed(0x67c4, {static_cast<std::uint64_t>(s)}), opts.eps);
      r.worst_error = std::max(r.worst_error, g.max_rel_error);
      r.checked += g.checked;
      r.skipped_at_kinks += g.skipped_at_kinks;
      ++r.seeds;
    }
    const double total = static_cast<double>(r.checked + r.skipped_at_kinks);
    r.passed = r.checked > 0 && r.worst_error <= opts.tolerance &&
               static_cast<double>(r.skipped_at_kinks) <= opts.max_kink_fraction * total;
    results.push_back(r);
  }
  return results;
}

}  // namespace resfcn
