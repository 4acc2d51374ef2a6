#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <map>

#include "resfcn/errors.hpp"
#include "resfcn/network.hpp"
#include "resfcn/presets.hpp"

using namespace resfcn;

namespace {

Tensor random_image(std::size_t n, std::size_t size, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n * size * size);
  for (double& e : v) e = uniform01(rng);
  return Tensor(Shape{n, 1, size, size}, std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

const char* kTiny = R"(
[network]
input_channels = 1
input_resolution = 8x8

[row Down1]
block = conv3x3
resolution = 8x8
width = 1

[row Classifier]
block = conv1x1
resolution = 8x8
width = 1
)";

}  // namespace

TEST(Config, TextRoundTrip) {
  const NetworkConfig a = toy_three_level_config(32, 8, 2);
  const NetworkConfig b = parse_network_config_text(to_config_text(a));
  EXPECT_EQ(to_config_text(a), to_config_text(b));
  ASSERT_EQ(b.rows.size(), a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(b.rows[i].name, a.rows[i].name);
    EXPECT_EQ(b.rows[i].kind, a.rows[i].kind);
    EXPECT_EQ(b.rows[i].out_resolution, a.rows[i].out_resolution);
    EXPECT_EQ(b.rows[i].out_width, a.rows[i].out_width);
    EXPECT_EQ(b.rows[i].repetitions, a.rows[i].repetitions);
    EXPECT_EQ(b.rows[i].role, a.rows[i].role);
  }
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_network_config_text("[row A]\nblock = simple\n"), ConfigError);
  EXPECT_THROW(parse_network_config_text(std::string(kTiny) + "[bogus]\nkey = 1\n"), ConfigError);
  std::string bad_block = kTiny;
  bad_block.replace(bad_block.find("conv3x3"), 7, "conv5x5");
  EXPECT_THROW(parse_network_config_text(bad_block), ConfigError);
  std::string bad_res = kTiny;
  bad_res.replace(bad_res.find("resolution = 8x8\nwidth"), 16, "resolution = 2x2");
  EXPECT_THROW(parse_network_config_text(bad_res), ConfigError);
  EXPECT_THROW(load_network_config("/nonexistent/net.ini"), IoError);
}

TEST(Config, ClassifierMustBeLast) {
  NetworkConfig cfg = toy_one_level_config(16, 4);
  cfg.rows.back().out_width = 2;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Config, LongSkipPairingByResolution) {
  const NetworkConfig cfg = toy_three_level_config(64, 8);
  std::map<std::string, int> src;
  for (std::size_t i = 0; i < cfg.rows.size(); ++i) src[cfg.rows[i].name] = long_skip_source(cfg, i);
  EXPECT_EQ(src["Down1"], -1);
  EXPECT_EQ(src["Across"], -1);
  EXPECT_EQ(cfg.rows[src["Up1"]].name, "Down3");
  EXPECT_EQ(cfg.rows[src["Up2"]].name, "Down2");
  EXPECT_EQ(cfg.rows[src["Up3"]].name, "Down1");
  EXPECT_EQ(src["Classifier"], -1);
  const NetworkConfig off = with_skips(cfg, SkipVariant::kShortOnly);
  for (std::size_t i = 0; i < off.rows.size(); ++i) EXPECT_EQ(long_skip_source(off, i), -1);
}

TEST(Network, ToyOneLevelShapes) {
  const Network net = build_network(toy_one_level_config(16, 4), 1);
  Rng rng(1);
  EXPECT_EQ(forward_pass(net, random_image(2, 16, 3), Mode::kTrain, rng).shape(), (Shape{2, 1, 16, 16}));
}

TEST(Network, RowObserverSeesEveryRow) {
  const NetworkConfig cfg = toy_three_level_config(32, 4);
  const Network net = build_network(cfg, 2);
  std::vector<Shape> seen;
  net.forward(random_image(1, 32, 1), ForwardContext{},
              [&](std::size_t, const Tensor& t) { seen.push_back(t.shape()); });
  ASSERT_EQ(seen.size(), cfg.rows.size());
  for (std::size_t i = 0; i < cfg.rows.size(); ++i) {
    EXPECT_EQ(seen[i], (Shape{1, cfg.rows[i].out_width, cfg.rows[i].out_resolution.height,
                              cfg.rows[i].out_resolution.width}));
  }
}

TEST(Network, EveryVariantHasCorrectShapes) {
  for (SkipVariant v : {SkipVariant::kLongAndShort, SkipVariant::kShortOnly, SkipVariant::kLongOnly,
                        SkipVariant::kNone}) {
    const Network net = build_network(with_skips(toy_three_level_config(16, 4, 2), v), 3);
    Rng rng(1);
    EXPECT_EQ(forward_pass(net, random_image(2, 16, 4), Mode::kTrain, rng).shape(), (Shape{2, 1, 16, 16}))
        << to_string(v);
  }
}

TEST(Network, LongSkipsChangeTheOutput) {
  const NetworkConfig cfg = toy_three_level_config(16, 4);
  const Network with = build_network(with_skips(cfg, SkipVariant::kLongAndShort), 5);
  const Network without = build_network(with_skips(cfg, SkipVariant::kShortOnly), 5);
  const Tensor x = random_image(1, 16, 6);
  EXPECT_NE(values(with.forward(x, ForwardContext{})), values(without.forward(x, ForwardContext{})));
}

TEST(Network, LongSkipCarriesGradientToTheStem) {
  // With short skips off and every expanding-path block zeroed, the only
  // route from the classifier back to Down1 is the long skip into Up3.
  NetworkConfig cfg = with_skips(toy_three_level_config(16, 4), SkipVariant::kLongOnly);
  Network net = build_network(cfg, 7);
  for (Parameter& p : net.parameters()) {
    if (p.name.rfind("Up1.", 0) == 0 || p.name.rfind("Up2.", 0) == 0) {
      for (double& v : p.tensor.data()) v = 0.0;
    }
  }
  for (Parameter& p : net.parameters()) p.tensor.set_requires_grad();
  sum(net.forward(random_image(1, 16, 8), ForwardContext{})).backward();
  const Parameter* stem = net.find_parameter("Down1.rep1.conv.weight");
  ASSERT_NE(stem, nullptr);
  double norm = 0.0;
  for (double g : stem->tensor.grad()) norm += std::abs(g);
  EXPECT_GT(norm, 0.0);

  Network cut = build_network(with_skips(cfg, SkipVariant::kNone), 7);
  for (Parameter& p : cut.parameters()) {
    if (p.name.rfind("Up1.", 0) == 0 || p.name.rfind("Up2.", 0) == 0) {
      for (double& v : p.tensor.data()) v = 0.0;
    }
    p.tensor.set_requires_grad();
  }
  sum(cut.forward(random_image(1, 16, 8), ForwardContext{})).backward();
  const Parameter* cut_stem = cut.find_parameter("Down1.rep1.conv.weight");
  double cut_norm = 0.0;
  if (cut_stem->tensor.has_grad()) {
    for (double g : cut_stem->tensor.grad()) cut_norm += std::abs(g);
  }
  EXPECT_EQ(cut_norm, 0.0);
}

TEST(Network, SharedNamesShareInitialValues) {
  const NetworkConfig cfg = toy_three_level_config(16, 4, 2);
  const Network a = build_network(with_skips(cfg, SkipVariant::kLongAndShort), 11);
  const Network b = build_network(with_skips(cfg, SkipVariant::kLongOnly), 11);
  std::size_t shared = 0;
  for (const Parameter& p : b.parameters()) {
    const Parameter* q = a.find_parameter(p.name);
    if (!q) continue;
    ++shared;
    EXPECT_EQ(values(p.tensor), values(q->tensor)) << p.name;
  }
  EXPECT_EQ(shared, b.parameters().size());
}

TEST(Network, SameSeedSameWeightsDifferentSeedDiffers) {
  const NetworkConfig cfg = toy_three_level_config(16, 4);
  const Network a = build_network(cfg, 1), b = build_network(cfg, 1), c = build_network(cfg, 2);
  EXPECT_EQ(checkpoint_bytes(a), checkpoint_bytes(b));
  const std::string w = "Down1.rep1.conv.weight";
  EXPECT_NE(values(a.find_parameter(w)->tensor), values(c.find_parameter(w)->tensor));
}

TEST(Network, DepthIndexIncreasesAlongThePath) {
  const Network net = build_network(toy_three_level_config(16, 4), 1);
  int last = -1;
  for (const Parameter& p : net.parameters()) {
    EXPECT_GE(p.depth_index, last) << p.name;
    last = p.depth_index;
  }
  const Network again = build_network(toy_three_level_config(16, 4), 99);
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    EXPECT_EQ(net.parameters()[i].depth_index, again.parameters()[i].depth_index);
  }
}

TEST(Network, ParameterCountSmallExample) {
  const Network net = build_network(parse_network_config_text(kTiny), 1);
  // conv3x3 1->1 (9+1), then BN on 1 channel (2) and conv1x1 1->1 (1+1).
  EXPECT_EQ(param_count(net), 10u + 2u + 2u);
  const Parameter* w = net.find_parameter("Down1.rep1.conv.weight");
  ASSERT_NE(w, nullptr);
  EXPECT_EQ(w->tensor.numel(), 9u);
}

TEST(Network, CheckpointRoundTrip) {
  Network net = build_network(toy_three_level_config(16, 4), 21);
  Rng rng(3);
  forward_pass(net, random_image(2, 16, 1), Mode::kTrain, rng);  // moves BN running stats
  const std::string bytes = checkpoint_bytes(net);
  const Network back = checkpoint_from_bytes(bytes);
  EXPECT_EQ(checkpoint_bytes(back), bytes);
  const Tensor x = random_image(1, 16, 2);
  EXPECT_EQ(values(net.forward(x, ForwardContext{})), values(back.forward(x, ForwardContext{})));

  const auto path = (std::filesystem::temp_directory_path() / "resfcn_ckpt_test.bin").string();
  save_checkpoint(net, path);
  EXPECT_EQ(checkpoint_bytes(load_checkpoint(path)), bytes);
  std::remove(path.c_str());
}

TEST(Network, CorruptCheckpointRejected) {
  const std::string bytes = checkpoint_bytes(build_network(toy_one_level_config(8, 2), 1));
  EXPECT_THROW(checkpoint_from_bytes("NOTACKPT" + bytes.substr(8)), IoError);
  EXPECT_THROW(checkpoint_from_bytes(bytes.substr(0, bytes.size() / 2)), IoError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
}
