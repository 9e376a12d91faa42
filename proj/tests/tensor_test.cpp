#include <gtest/gtest.h>

#include <cmath>
#include <thread>

#include "metagnn/errors.hpp"
#include "metagnn/random.hpp"
#include "metagnn/tensor.hpp"

namespace metagnn {
namespace {

TEST(Tensor, MatmulIdentity) {
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto out = matmul(a, Tensor::identity(2));
  EXPECT_EQ(out.shape(), (Shape{2, 2}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out.at(i), a.at(i));
}

TEST(Tensor, SoftmaxOfZerosIsUniform) {
  auto s = row_softmax(Tensor::matrix(1, 3, {0, 0, 0}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.at(i), 1.0 / 3.0, 1e-15);
}

TEST(Tensor, LeakyRelu) {
  auto y = leaky_relu(Tensor({2}, {-2.0, 3.0}), 0.1);
  EXPECT_DOUBLE_EQ(y.at(0), -0.2);
  EXPECT_DOUBLE_EQ(y.at(1), 3.0);
}

TEST(Tensor, SoftmaxRowsSumToOneWithMaskedEntries) {
  Rng rng(3);
  std::vector<double> v(20);
  for (auto& x : v) x = rng.uniform(-50, 50);
  std::vector<bool> mask(20, false);
  mask[1] = mask[7] = mask[8] = true;
  auto s = row_softmax(masked_fill(Tensor({4, 5}, v), mask, -INFINITY));
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) total += s.at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_EQ(s.at(0, 1), 0.0);
  EXPECT_EQ(s.at(1, 2), 0.0);
}

TEST(Tensor, BroadcastRules) {
  auto m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  auto row = add(m, Tensor({3}, {10, 20, 30}));
  EXPECT_EQ(row.at(1, 2), 36.0);
  auto s = mul(m, Tensor::scalar(2.0));
  EXPECT_EQ(s.at(1, 0), 8.0);
  EXPECT_THROW(add(m, Tensor({2}, {1, 2})), ShapeError);
  EXPECT_THROW(matmul(m, m), ShapeError);
}

TEST(Tensor, CrossEntropyMatchesDirectFormula) {
  auto logits = Tensor::matrix(2, 3, {1.0, 2.0, 0.5, -1.0, 0.0, 3.0});
  const int labels[] = {1, 2};
  double expected = 0.0;
  for (int r = 0; r < 2; ++r) {
    double z = 0.0;
    for (int c = 0; c < 3; ++c) z += std::exp(logits.at(r, c));
    expected += std::log(z) - logits.at(r, labels[r]);
  }
  EXPECT_NEAR(cross_entropy(logits, labels).item(), expected / 2.0, 1e-14);
}

TEST(Autodiff, FirstDerivativeOfSquare) {
  auto x = Tensor::scalar(3.0, true);
  auto g = grad(x * x, std::vector{x});
  EXPECT_DOUBLE_EQ(g[0].item(), 6.0);
}

TEST(Autodiff, SecondDerivativeOfSquare) {
  auto x = Tensor::scalar(3.0, true);
  const std::vector wrt{x};
  auto g = grad(x * x, wrt, {.create_graph = true});
  ASSERT_TRUE(g[0].requires_grad());
  auto h = grad(g[0], wrt);
  EXPECT_DOUBLE_EQ(h[0].item(), 2.0);
}

TEST(Autodiff, ThirdDerivativeOfCube) {
  auto x = Tensor::scalar(1.5, true);
  const std::vector wrt{x};
  auto y = x * x * x;
  auto g1 = grad(y, wrt, {.create_graph = true});
  auto g2 = grad(g1[0], wrt, {.create_graph = true});
  auto g3 = grad(g2[0], wrt);
  EXPECT_NEAR(g1[0].item(), 3 * 1.5 * 1.5, 1e-14);
  EXPECT_NEAR(g2[0].item(), 6 * 1.5, 1e-14);
  EXPECT_NEAR(g3[0].item(), 6.0, 1e-14);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  auto x = Tensor::scalar(2.0, true);
  auto y = x * x;
  auto z = y + y * x;
  auto g = grad(z, std::vector{x});
  EXPECT_DOUBLE_EQ(g[0].item(), 2 * 2.0 + 3 * 4.0);
}

TEST(Autodiff, UnreachableInputGetsZeroAndFlag) {
  auto x = Tensor::scalar(1.0, true);
  auto y = Tensor::matrix(1, 2, {1, 2}, true);
  std::vector<bool> unreachable;
  auto g = grad(x * x, std::vector{x, y}, {}, &unreachable);
  ASSERT_EQ(unreachable.size(), 2u);
  EXPECT_FALSE(unreachable[0]);
  EXPECT_TRUE(unreachable[1]);
  EXPECT_EQ(g[1].shape(), y.shape());
  EXPECT_EQ(g[1].at(0), 0.0);
  EXPECT_EQ(g[1].at(1), 0.0);
}

TEST(Autodiff, NoGradGuardStopsRecording) {
  auto x = Tensor::scalar(2.0, true);
  {
    NoGradGuard guard;
    auto y = x * x;
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE((x * x).requires_grad());
}

TEST(Autodiff, GradModeIsPerThread) {
  NoGradGuard guard;
  bool other = false;
  std::thread t([&] { other = grad_enabled(); });
  t.join();
  EXPECT_TRUE(other);
  EXPECT_FALSE(grad_enabled());
}

TEST(Autodiff, DetachCutsHistory) {
  auto x = Tensor::scalar(2.0, true);
  auto y = (x * x).detach(true);
  EXPECT_TRUE(y.is_leaf());
  auto g = grad(y * x, std::vector{x});
  EXPECT_DOUBLE_EQ(g[0].item(), 4.0);
}

TEST(Autodiff, NonScalarLossRejected) {
  auto x = Tensor::matrix(1, 2, {1, 2}, true);
  EXPECT_THROW(grad(x * x, std::vector{x}), ShapeError);
}

}  // namespace
}  // namespace metagnn
