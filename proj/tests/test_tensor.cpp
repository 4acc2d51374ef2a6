#include <gtest/gtest.h>

#include <cmath>

#include "resfcn/errors.hpp"
#include "resfcn/gradcheck.hpp"
#include "resfcn/ops.hpp"

using namespace resfcn;

TEST(Tensor, ShapeAndDataLengthMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.ndim(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_THROW(t.dim(2), DimensionError);
}

TEST(Tensor, ItemNeedsOneElement) {
  EXPECT_DOUBLE_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW(Tensor(Shape{2}).item(), ContractError);
}

TEST(Tensor, Float32ModeRoundsResults) {
  PrecisionScope f32(Precision::kFloat32);
  const Tensor a(Shape{1}, std::vector<double>{0.1});
  const Tensor b(Shape{1}, std::vector<double>{0.2});
  EXPECT_EQ(add(a, b).item(), static_cast<double>(static_cast<float>(0.1 + 0.2)));
}

TEST(Tensor, Float64ModeKeepsFullPrecision) {
  PrecisionScope f64(Precision::kFloat64);
  const Tensor a(Shape{1}, std::vector<double>{0.1});
  const Tensor b(Shape{1}, std::vector<double>{0.2});
  EXPECT_EQ(add(a, b).item(), 0.1 + 0.2);
}

TEST(Tensor, PrecisionScopeRestores) {
  ASSERT_EQ(precision(), Precision::kFloat32);
  {
    PrecisionScope f64(Precision::kFloat64);
    EXPECT_EQ(precision(), Precision::kFloat64);
  }
  EXPECT_EQ(precision(), Precision::kFloat32);
}

TEST(Autodiff, AddExample) {
  const Tensor a(Shape{2}, std::vector<double>{1, 2});
  const Tensor b(Shape{2}, std::vector<double>{3, 4});
  const Tensor c = add(a, b);
  EXPECT_EQ(c.data()[0], 4);
  EXPECT_EQ(c.data()[1], 6);
  EXPECT_THROW(add(a, Tensor(Shape{3})), DimensionError);
}

TEST(Autodiff, AddZerosIsIdentity) {
  const Tensor x(Shape{3}, std::vector<double>{-1.5, 0.25, 7});
  const Tensor y = add(x, Tensor(Shape{3}, 0.0));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Autodiff, AddPassesGradientUnchangedToBothBranches) {
  Tensor a(Shape{3}, std::vector<double>{1, 2, 3});
  Tensor b(Shape{3}, std::vector<double>{-1, 0, 5});
  a.set_requires_grad();
  b.set_requires_grad();
  const Tensor w(Shape{3}, std::vector<double>{0.5, -2, 3});
  sum(mul(add(a, b), w)).backward();
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.grad()[i], w.data()[i]);
    EXPECT_EQ(b.grad()[i], a.grad()[i]);
  }
}

TEST(Autodiff, SumOfAddFiniteDifference) {
  PrecisionScope f64(Precision::kFloat64);
  Tensor a(Shape{4}, std::vector<double>{0.3, -1.2, 2.0, 0.7});
  const Tensor b(Shape{4}, std::vector<double>{1, 1, 1, 1});
  a.set_requires_grad();
  const auto r = finite_diff_check([&] { return sum(add(a, b)); }, a);
  EXPECT_LT(r.max_rel_error, 1e-6);
  sum(add(a, b)).backward();
  for (double g : a.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, ReluGradientExample) {
  Tensor x(Shape{2}, std::vector<double>{-1, 2});
  x.set_requires_grad();
  sum(relu(x)).backward();
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_EQ(x.grad()[1], 1.0);
}

TEST(Autodiff, SigmoidGradientExample) {
  Tensor x(Shape{1}, std::vector<double>{0});
  x.set_requires_grad();
  sum(sigmoid(x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Autodiff, GradientsAccumulateUntilZeroed) {
  Tensor x(Shape{2}, std::vector<double>{1, 2});
  x.set_requires_grad();
  sum(scale(x, 3.0)).backward();
  sum(scale(x, 3.0)).backward();
  EXPECT_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0);
  sum(scale(x, 3.0)).backward();
  EXPECT_EQ(x.grad()[1], 3.0);
}

TEST(Autodiff, SharedSubexpressionVisitedOnce) {
  // y = x*x used twice: d/dx sum(y + y) = 4x.
  Tensor x(Shape{2}, std::vector<double>{1.5, -2});
  x.set_requires_grad();
  const Tensor y = mul(x, x);
  sum(add(y, y)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -8.0);
}

TEST(Autodiff, UnreachableTensorsGetNoGradient) {
  Tensor x(Shape{2}, 1.0), unused(Shape{2}, 1.0);
  x.set_requires_grad();
  unused.set_requires_grad();
  const Tensor side = mul(unused, unused);
  sum(relu(x)).backward();
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(unused.has_grad());
  EXPECT_EQ(side.numel(), 2u);
}

TEST(Autodiff, NonScalarLossIsContractError) {
  Tensor x(Shape{2}, 1.0);
  x.set_requires_grad();
  EXPECT_THROW(relu(x).backward(), ContractError);
}

TEST(Autodiff, DetachedLossIsError) {
  Tensor x(Shape{2}, 1.0);
  x.set_requires_grad();
  const Tensor loss = sum(x).detach();
  EXPECT_THROW(loss.backward(), ContractError);
}

TEST(Autodiff, RequiresGradOnlyOnLeaves) {
  Tensor x(Shape{2}, 1.0);
  x.set_requires_grad();
  Tensor y = relu(x);
  EXPECT_FALSE(y.is_leaf());
  EXPECT_THROW(y.set_requires_grad(), ContractError);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  Tensor x(Shape{2}, 1.0);
  x.set_requires_grad();
  Tensor y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = sum(relu(x));
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_THROW(y.backward(), ContractError);
}

TEST(Autodiff, CloneCopiesStorage) {
  const Tensor x(Shape{2}, 1.0);
  Tensor c = x.clone();
  EXPECT_FALSE(c.same_storage(x));
  c.data()[0] = 5;
  EXPECT_EQ(x.data()[0], 1.0);
}

TEST(Autodiff, DeterministicGradients) {
  auto run = [] {
    Rng rng(3);
    std::normal_distribution<double> d;
    std::vector<double> v(2 * 3 * 5 * 5);
    for (double& e : v) e = d(rng);
    Tensor x(Shape{2, 3, 5, 5}, v);
    Tensor w(Shape{4, 3, 3, 3}, 0.1);
    x.set_requires_grad();
    w.set_requires_grad();
    sum(relu(conv2d(x, w, Tensor(), 1, 1))).backward();
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}
