#include <gtest/gtest.h>

#include <numeric>

#include "resfcn/blocks.hpp"
#include "resfcn/errors.hpp"

using namespace resfcn;

namespace {

Tensor random_input(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> d;
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  std::vector<double> v(n);
  // float-representable so float32-mode adds of zero are exact
  for (double& e : v) e = static_cast<float>(d(rng));
  return Tensor(std::move(shape), std::move(v));
}

std::size_t count(const ParamFactory& f) {
  std::size_t n = 0;
  for (const Parameter& p : const_cast<ParamFactory&>(f).parameters()) n += p.tensor.numel();
  return n;
}

void zero_all(ParamFactory& f) {
  for (Parameter& p : f.parameters()) {
    if (p.layer.find(".shortcut") != std::string::npos) continue;
    for (double& v : p.tensor.data()) v = 0.0;
  }
}

}  // namespace

TEST(Block, ZeroResidualWeightsGiveIdentity) {
  for (BlockKind kind : {BlockKind::kSimple, BlockKind::kBasic, BlockKind::kBottleneck}) {
    ParamFactory f(1);
    BlockOpts o;
    o.in_channels = o.out_channels = 8;
    auto block = make_block(kind, "b", o, f);
    zero_all(f);
    const Tensor x = random_input({2, 8, 6, 6}, 4);
    const Tensor y = block->forward(x, ForwardContext{});
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]) << to_string(kind);
  }
}

TEST(Block, ZeroWeightsWithoutShortSkipGiveZero) {
  ParamFactory f(2);
  BlockOpts o;
  o.in_channels = o.out_channels = 4;
  o.use_short_skip = false;
  auto block = make_block(BlockKind::kBasic, "b", o, f);
  zero_all(f);
  const Tensor y = block->forward(random_input({1, 4, 5, 5}, 9), ForwardContext{});
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Block, OutputShapesForEveryVariant) {
  for (BlockKind kind : {BlockKind::kSimple, BlockKind::kBasic, BlockKind::kBottleneck}) {
    for (Resample r : {Resample::kNone, Resample::kDown, Resample::kUp}) {
      for (bool skip : {true, false}) {
        ParamFactory f(3);
        BlockOpts o;
        o.in_channels = 4;
        o.out_channels = 8;
        o.resample = r;
        o.use_short_skip = skip;
        auto block = make_block(kind, "b", o, f);
        Rng rng(5);
        ForwardContext ctx{Mode::kTrain, &rng, std::nullopt};
        const Tensor y = block->forward(random_input({2, 4, 8, 8}, 6), ctx);
        const std::size_t side = r == Resample::kDown ? 4 : r == Resample::kUp ? 16 : 8;
        EXPECT_EQ(y.shape(), (Shape{2, 8, side, side}))
            << to_string(kind) << " " << to_string(r) << " skip=" << skip;
      }
    }
  }
}

TEST(Shortcut, ProjectionParameterCount) {
  ParamFactory f(1);
  BlockOpts o;
  o.in_channels = 32;
  o.out_channels = 128;
  const Shortcut s("s", o, f);
  EXPECT_FALSE(s.is_identity());
  EXPECT_EQ(count(f), 32u * 128u + 128u);
}

TEST(Shortcut, DecimationAddsNoParameters) {
  ParamFactory f(1);
  BlockOpts o;
  o.in_channels = o.out_channels = 16;
  o.resample = Resample::kDown;
  const Shortcut s("s", o, f);
  EXPECT_FALSE(s.is_identity());
  EXPECT_EQ(count(f), 0u);
  const Tensor x = random_input({1, 16, 8, 8}, 1);
  const Tensor y = s(x);
  EXPECT_EQ(y.shape(), (Shape{1, 16, 4, 4}));
  EXPECT_EQ(y.data()[1], x.data()[2]);
}

TEST(Shortcut, IdentityWhenShapesMatch) {
  ParamFactory f(1);
  BlockOpts o;
  o.in_channels = o.out_channels = 16;
  const Shortcut s("s", o, f);
  EXPECT_TRUE(s.is_identity());
  const Tensor x = random_input({1, 16, 4, 4}, 2);
  EXPECT_TRUE(s(x).same_storage(x));
}

TEST(Block, BasicParameterCountFormula) {
  for (auto [in, out] : {std::pair<std::size_t, std::size_t>{4, 8}, {8, 8}}) {
    ParamFactory f(1);
    BlockOpts o;
    o.in_channels = in;
    o.out_channels = out;
    make_block(BlockKind::kBasic, "b", o, f);
    std::size_t expect = 9 * in * out + out + 9 * out * out + out + 2 * in + 2 * out;
    if (in != out) expect += in * out + out;
    EXPECT_EQ(count(f), expect);
  }
}

TEST(Block, BottleneckInnerWidth) {
  EXPECT_EQ(BottleneckBlock::inner_width(128), 32u);
  EXPECT_THROW(BottleneckBlock::inner_width(6), ConfigError);
  ParamFactory f(1);
  BlockOpts o;
  o.in_channels = 4;
  o.out_channels = 10;
  EXPECT_THROW(make_block(BlockKind::kBottleneck, "b", o, f), ConfigError);
}

TEST(Block, InvalidOptionsRejected) {
  ParamFactory f(1);
  BlockOpts o;
  o.in_channels = 0;
  EXPECT_THROW(make_block(BlockKind::kSimple, "b", o, f), ConfigError);
  o.in_channels = 2;
  o.dropout_rate = 1.0;
  EXPECT_THROW(make_block(BlockKind::kSimple, "b", o, f), ConfigError);
}

TEST(Block, DropoutOverrideActiveInEval) {
  ParamFactory f(1);
  BlockOpts o;
  o.in_channels = o.out_channels = 4;
  o.dropout_rate = 0.2;
  auto block = make_block(BlockKind::kSimple, "b", o, f);
  const Tensor x = random_input({1, 4, 6, 6}, 3);
  const Tensor a = block->forward(x, ForwardContext{});
  const Tensor b = block->forward(x, ForwardContext{});
  EXPECT_EQ(std::vector<double>(a.data().begin(), a.data().end()),
            std::vector<double>(b.data().begin(), b.data().end()));
  Rng rng(7);
  const Tensor c = block->forward(x, ForwardContext{Mode::kEval, &rng, 0.5});
  EXPECT_NE(std::vector<double>(a.data().begin(), a.data().end()),
            std::vector<double>(c.data().begin(), c.data().end()));
}
