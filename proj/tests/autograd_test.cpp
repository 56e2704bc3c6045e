#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ruinscope/autograd.hpp"
#include "ruinscope/error.hpp"

namespace {

using namespace ruinscope;
using namespace ruinscope::nn;
using testing_support::DTensor;
using testing_support::DVar;

class GradientCheck : public ::testing::TestWithParam<std::string> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const auto ops = testing_support::differentiable_ops();
  const auto it = std::find_if(ops.begin(), ops.end(), [&](const auto& op) { return op.name == GetParam(); });
  ASSERT_NE(it, ops.end());
  Rng rng(mix_seed(77, std::hash<std::string>{}(GetParam())));
  for (int shape = 0; shape < 20; ++shape) {
    const auto c = it->draw(rng);
    EXPECT_LT(testing_support::gradient_error(c, rng), 1e-4) << "shape draw " << shape;
  }
}

std::vector<std::string> op_names() {
  std::vector<std::string> names;
  for (const auto& op : testing_support::differentiable_ops()) names.push_back(op.name);
  return names;
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientCheck, ::testing::ValuesIn(op_names()),
                         [](const auto& info) { return info.param; });

TEST(Autograd, ReusedInputAccumulatesGradient) {
  DVar x(DTensor({2}, {3.0, -1.0}), true);
  backward(sum(mul(x, x)));
  EXPECT_EQ(x.grad(), DTensor({2}, {6.0, -2.0}));
}

TEST(Autograd, NonScalarLossRejected) {
  DVar x(DTensor({2}, {1.0, 2.0}), true);
  try {
    backward(relu(x));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NonScalarLoss);
  }
}

TEST(Autograd, ShapeMismatchRejected) {
  DVar a(DTensor({2, 3}), true);
  DVar b(DTensor({3, 2}), true);
  EXPECT_THROW(add(a, b), Error);
  EXPECT_THROW(matmul(a, a), Error);
}

TEST(Autograd, SoftmaxRowsSumToOne) {
  const DVar x(DTensor({2, 3}, {1000.0, 0.0, -1000.0, 0.1, 0.2, 0.3}));
  const auto p = softmax(x).value();
  EXPECT_NEAR(p[0], 1.0, 1e-15);
  EXPECT_NEAR(p[3] + p[4] + p[5], 1.0, 1e-15);
  EXPECT_NEAR(p[4], std::exp(0.2) / (std::exp(0.1) + std::exp(0.2) + std::exp(0.3)), 1e-15);
}

TEST(Autograd, WeightedCrossEntropyValue) {
  const DVar z(DTensor({3, 2}, {0.0, 0.0, 2.0, 0.0, 0.0, 5.0}));
  const std::vector<int> labels{0, 1, 1};
  const std::vector<double> w{1.0, 3.0};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  const double got = weighted_cross_entropy(z, std::span<const int>(labels), std::span<const double>(w),
                                            std::span<const std::uint8_t>(mask))
                         .value()[0];
  const double l0 = std::log(2.0);
  const double l1 = -std::log(1.0 / (1.0 + std::exp(2.0)));
  EXPECT_NEAR(got, (1.0 * l0 + 3.0 * l1) / 4.0, 1e-14);
}

TEST(Autograd, CrossEntropyErrors) {
  const DVar z(DTensor({2, 2}));
  const std::vector<double> w{1.0, 1.0};
  const std::vector<int> labels{0, 1};
  const std::vector<std::uint8_t> none{0, 0};
  try {
    weighted_cross_entropy(z, std::span<const int>(labels), std::span<const double>(w),
                           std::span<const std::uint8_t>(none));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllMasked);
  }
  const std::vector<int> bad{0, 2};
  const std::vector<std::uint8_t> all{1, 1};
  EXPECT_THROW(weighted_cross_entropy(z, std::span<const int>(bad), std::span<const double>(w),
                                      std::span<const std::uint8_t>(all)),
               Error);
}

TEST(Autograd, ScatterMeanEmptyGroupIsZero) {
  const DVar v(DTensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  const std::vector<std::size_t> group{0, 0, 2};
  const auto out = scatter_mean(v, std::span<const std::size_t>(group), 3).value();
  EXPECT_EQ(out, DTensor({3, 2}, {2, 3, 0, 0, 5, 6}));
  const std::vector<double> w{1.0, 3.0, 0.0};
  const auto weighted =
      scatter_mean(v, std::span<const std::size_t>(group), 3, std::optional<std::span<const double>>(w)).value();
  EXPECT_EQ(weighted, DTensor({3, 2}, {2.5, 3.5, 0, 0, 0, 0}));
}

TEST(Autograd, DropoutModes) {
  const DVar x(DTensor({4, 25}, std::vector<double>(100, 1.0)));
  EXPECT_EQ(dropout(x, 0.5, false, 1).value(), x.value());
  EXPECT_EQ(dropout(x, 0.0, true, 1).value(), x.value());
  const auto y = dropout(x, 0.5, true, 1).value();
  for (double v : y.data()) EXPECT_TRUE(v == 0.0 || v == 2.0);
  EXPECT_EQ(y, dropout(x, 0.5, true, 1).value());
  EXPECT_NE(y, dropout(x, 0.5, true, 2).value());
  EXPECT_THROW(dropout(x, 1.0, true, 1), Error);
}

TEST(Autograd, PoolingForwardValues) {
  const DVar x(DTensor({1, 1, 2, 4}, {1, 5, 2, 0, 3, 4, 8, 1}));
  EXPECT_EQ(max_pool2d(x, 2).value(), DTensor({1, 1, 1, 2}, {5, 8}));
  EXPECT_EQ(avg_pool2d(x, 2).value(), DTensor({1, 1, 1, 2}, {3.25, 2.75}));
  EXPECT_EQ(global_avg_pool(x).value(), DTensor({1, 1}, {3.0}));
}

TEST(Autograd, ConcatAndNarrowAreInverse) {
  Rng rng(1);
  const DVar a(testing_support::random_tensor(rng, {2, 3}));
  const DVar b(testing_support::random_tensor(rng, {2, 4}));
  const auto c = concat<double>({a, b}, 1);
  EXPECT_EQ(narrow(c, 1, 0, 3).value(), a.value());
  EXPECT_EQ(narrow(c, 1, 3, 4).value(), b.value());
  EXPECT_THROW(narrow(c, 1, 5, 4), Error);
}

TEST(Autograd, FloatAndDoubleAgree) {
  Rng rng(2);
  const DTensor x = testing_support::random_tensor(rng, {2, 3, 6, 6});
  const DTensor w = testing_support::random_tensor(rng, {4, 3, 3, 3});
  const DTensor b = testing_support::random_tensor(rng, {4});
  const auto yd = relu(conv2d(DVar(x), DVar(w), DVar(b), 1, 1)).value();
  const auto yf = relu(conv2d(Var<float>(x.cast<float>()), Var<float>(w.cast<float>()), Var<float>(b.cast<float>()), 1, 1))
                      .value();
  for (std::size_t i = 0; i < yd.size(); ++i) EXPECT_NEAR(yf[i], yd[i], 1e-5);
}

}  // namespace
