#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "metagnn/gnn.hpp"
#include "metagnn/gradcheck.hpp"
#include "metagnn/gradcheck_suite.hpp"
#include "metagnn/graph.hpp"
#include "metagnn/random.hpp"

namespace metagnn {
namespace {

Tensor random_leaf(Rng& rng, Shape shape) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor(std::move(shape), std::move(v), true);
}

// x^2 elementwise with a deliberately wrong backward rule (-2x).
Tensor bad_square(const Tensor& x) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= v;
  return detail::make_op_result("bad_square", x.shape(), std::move(out), {x},
                                [x](const Tensor& g) {
                                  return std::vector<Tensor>{g * scale(x, -2.0)};
                                });
}

TEST(Gradcheck, SumOfSquares) {
  Rng rng(11);
  for (int s = 0; s < 5; ++s) {
    auto x = random_leaf(rng, {4, 3});
    const double err =
        finite_diff_check([](const Tensor& t) { return sum(t * t); }, x, 1e-5);
    EXPECT_LE(err, 1e-6);
  }
}

TEST(Gradcheck, NumericalGradientOfSumOfSquaresIsTwoX) {
  Rng rng(12);
  auto x = random_leaf(rng, {5});
  auto num = numerical_gradient(
      [](const ParamList& p) { return sum(p[0] * p[0]); }, {x}, 1e-5);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(num[0].at(i), 2 * x.at(i), 1e-9);
}

TEST(Gradcheck, ConstantFunctionHasZeroError) {
  Rng rng(13);
  auto x = random_leaf(rng, {3});
  EXPECT_EQ(finite_diff_check([](const Tensor&) { return Tensor::scalar(4.0); },
                              x, 1e-5),
            0.0);
}

TEST(Gradcheck, CrossEntropyThreeClasses) {
  Rng rng(14);
  auto logits = random_leaf(rng, {1, 3});
  const int label[] = {2};
  EXPECT_LE(finite_diff_check(
                [&](const Tensor& t) { return cross_entropy(t, label); }, logits,
                1e-5),
            1e-4);
}

TEST(Gradcheck, GcnLayerOnThreeNodeGraph) {
  auto w = Tensor::matrix(3, 3, {0, 0.5, 0, 0.5, 0, 0.8, 0, 0.8, 0});
  const auto s_hat = normalize_adjacency(w);
  Rng rng(15);
  for (int s = 0; s < 5; ++s) {
    auto x = random_leaf(rng, {3, 4});
    auto theta = random_leaf(rng, {4, 2});
    const int label[] = {1};
    const double err = finite_diff_check(
        [&](const ParamList& p) {
          auto h = gcn_forward(p[0], s_hat, p[1], 0.2);
          return cross_entropy(mean_rows(h), label);
        },
        {x, theta}, 1e-5);
    EXPECT_LE(err, 1e-4);
  }
}

TEST(Gradcheck, InjectedSignErrorIsDetected) {
  Rng rng(16);
  auto x = random_leaf(rng, {3, 2});
  const double err =
      finite_diff_check([](const Tensor& t) { return sum(bad_square(t)); }, x, 1e-5);
  EXPECT_GT(err, 1.0);
}

TEST(Gradcheck, WrongSuppliedGradientIsDetected) {
  Rng rng(17);
  ParamList p{random_leaf(rng, {4})};
  const double err = finite_diff_check(
      [](const ParamList& q) { return sum(q[0] * q[0]); }, p, 1e-5,
      [](const ParamList& q) { return ParamList{scale(q[0], -2.0)}; });
  EXPECT_NEAR(err, 2.0, 1e-6);
}

TEST(Gradcheck, RelativeErrorIsNormwise) {
  const ParamList a{Tensor({2}, {1.0, 0.0})};
  const ParamList n{Tensor({2}, {1.0, 1e-9})};
  EXPECT_NEAR(max_relative_error(a, n), 1e-9, 1e-15);
  EXPECT_EQ(max_relative_error({Tensor({1}, {0.0})}, {Tensor({1}, {0.0})}), 0.0);
}

TEST(GradcheckSuite, CoversEveryGroupAndPasses) {
  GradcheckOptions opt;
  opt.seeds = 2;
  const auto results = run_gradcheck_suite(opt);
  std::set<std::string> groups;
  for (const auto& r : results) {
    groups.insert(r.group);
    EXPECT_TRUE(r.passed()) << r.name << " " << r.max_rel_error;
    EXPECT_TRUE(std::isfinite(r.max_rel_error)) << r.name;
  }
  EXPECT_EQ(groups, (std::set<std::string>{"primitive", "layer", "model", "meta"}));
  EXPECT_GE(results.size(), 30u);
}

TEST(GradcheckSuite, FilterSelectsByName) {
  GradcheckOptions opt;
  opt.seeds = 1;
  opt.filter = "softmax";
  const auto results = run_gradcheck_suite(opt);
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_NE(r.name.find("softmax"), std::string::npos);
}

}  // namespace
}  // namespace metagnn
