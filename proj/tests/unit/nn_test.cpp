#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "garkopt/nn.hpp"
#include "test_support.hpp"

using namespace garkopt;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

Batch regression_batch(std::size_t n, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {random_matrix(n, in, rng), random_matrix(n, out, rng), {}};
}

Batch classification_batch(std::size_t n, std::size_t in, std::size_t classes, std::mt19937_64& rng) {
  Batch b{random_matrix(n, in, rng), {}, {}};
  std::uniform_int_distribution<std::size_t> c(0, classes - 1);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(c(rng));
  return b;
}

}  // namespace

TEST(Mlp, ParameterCount) {
  const std::vector<std::size_t> sizes{3, 100, 3};
  EXPECT_EQ(mlp_parameter_count(sizes), 703u);
  EXPECT_EQ(Mlp(sizes, Activation::tanh, OutputMode::linear, 1).parameter_count(), 703u);
  const std::vector<std::size_t> deep{1, 10, 10, 10, 10, 10, 1};
  EXPECT_EQ(mlp_parameter_count(deep), 20u + 4u * 110u + 11u);
}

TEST(Mlp, LayoutWeightsBeforeBiases) {
  const Mlp net({2, 3, 1}, Activation::tanh, OutputMode::linear);
  EXPECT_EQ(net.weight_offset(0), 0u);
  EXPECT_EQ(net.bias_offset(0), 6u);
  EXPECT_EQ(net.weight_offset(1), 9u);
  EXPECT_EQ(net.bias_offset(1), 12u);
  EXPECT_EQ(net.parameter_count(), 13u);
}

TEST(Mlp, GlorotInitialisation) {
  const Mlp a({4, 30, 2}, Activation::tanh, OutputMode::linear, 99);
  const Mlp b({4, 30, 2}, Activation::tanh, OutputMode::linear, 99);
  const Mlp c({4, 30, 2}, Activation::tanh, OutputMode::linear, 100);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_NE(a.parameters(), c.parameters());
  const double bound0 = std::sqrt(6.0 / 34.0);
  for (std::size_t k = 0; k < 120; ++k) EXPECT_LE(std::abs(a.parameters()[k]), bound0);
  for (std::size_t k = a.bias_offset(0); k < a.weight_offset(1); ++k) EXPECT_EQ(a.parameters()[k], 0.0);
  for (std::size_t k = a.bias_offset(1); k < a.parameter_count(); ++k) EXPECT_EQ(a.parameters()[k], 0.0);
}

TEST(Mlp, UnitFanBound) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Mlp net({1, 1}, Activation::tanh, OutputMode::linear, seed);
    EXPECT_LE(std::abs(net.parameters()[0]), std::sqrt(3.0));
  }
}

TEST(Mlp, InvalidSizes) {
  EXPECT_THROW(Mlp({3}, Activation::tanh, OutputMode::linear), DimensionError);
  EXPECT_THROW(Mlp({3, 0, 1}, Activation::tanh, OutputMode::linear), DimensionError);
}

TEST(Mlp, SetParametersRoundTrip) {
  Mlp net({2, 4, 2}, Activation::silu, OutputMode::logits, 3);
  const auto p = net.parameters();
  net.set_parameters(p);
  EXPECT_EQ(net.parameters(), p);
  EXPECT_THROW(net.set_parameters(std::vector<double>(3)), DimensionError);
}

TEST(Forward, ZeroNetworkGivesZero) {
  const Mlp net({3, 5, 2}, Activation::tanh, OutputMode::linear);
  std::mt19937_64 rng(1);
  const auto out = forward(net, random_matrix(4, 3, rng));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(out(i, j), 0.0);
}

TEST(Forward, ReluClipsNegativeHidden) {
  Mlp net({1, 1, 1}, Activation::relu, OutputMode::linear);
  net.set_parameters(std::vector<double>{1.0, 0.0, 1.0, 0.0});
  EXPECT_EQ(forward(net, Matrix{{-2.0}})(0, 0), 0.0);
  EXPECT_EQ(forward(net, Matrix{{3.0}})(0, 0), 3.0);
}

TEST(Forward, HandComputedTwoLayer) {
  Mlp net({2, 2, 1}, Activation::tanh, OutputMode::linear);
  // W1 = [[1, 2], [-1, 0.5]], b1 = [0.1, -0.2], W2 = [[0.3, -0.7]], b2 = [0.05]
  net.set_parameters(std::vector<double>{1, 2, -1, 0.5, 0.1, -0.2, 0.3, -0.7, 0.05});
  const double x0 = 0.4, x1 = -0.3;
  const double h0 = std::tanh(1 * x0 + 2 * x1 + 0.1), h1 = std::tanh(-1 * x0 + 0.5 * x1 - 0.2);
  EXPECT_NEAR(forward(net, Matrix{{x0, x1}})(0, 0), 0.3 * h0 - 0.7 * h1 + 0.05, 1e-15);
}

TEST(Forward, BatchEqualsRowByRow) {
  std::mt19937_64 rng(2);
  const Mlp net({3, 7, 4}, Activation::silu, OutputMode::logits, 5);
  const auto x = random_matrix(9, 3, rng);
  const auto all = forward(net, x);
  for (std::size_t i = 0; i < 9; ++i) {
    Matrix row(1, 3);
    for (std::size_t j = 0; j < 3; ++j) row(0, j) = x(i, j);
    const auto one = forward(net, row);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(one(0, j), all(i, j));
  }
}

TEST(Forward, InputWidthChecked) {
  const Mlp net({3, 2}, Activation::tanh, OutputMode::linear);
  EXPECT_THROW(forward(net, Matrix(2, 4)), DimensionError);
}

TEST(Loss, PerfectPredictionHasZeroLossAndGradient) {
  std::mt19937_64 rng(3);
  const Mlp net({2, 6, 2}, Activation::tanh, OutputMode::linear, 8);
  Batch b{random_matrix(5, 2, rng), {}, {}};
  b.targets = forward(net, b.inputs);
  const auto lg = loss_and_gradient(net, b, LossKind::mse);
  EXPECT_EQ(lg.loss, 0.0);
  for (double g : lg.grad) EXPECT_EQ(g, 0.0);
}

TEST(Loss, MseIsMeanOverSamplesAndOutputs) {
  const Mlp net({1, 2}, Activation::tanh, OutputMode::linear);
  const Batch b{Matrix{{1.0}, {2.0}}, Matrix{{1.0, 2.0}, {3.0, 0.0}}, {}};
  EXPECT_DOUBLE_EQ(batch_loss(net, net.parameters(), b, LossKind::mse), (1.0 + 4.0 + 9.0 + 0.0) / 4.0);
}

TEST(Loss, UniformLogitsGiveLogTwo) {
  const Mlp net({2, 2}, Activation::tanh, OutputMode::logits);
  const Batch b{Matrix{{0.3, 0.1}, {-1.0, 2.0}}, {}, {0, 1}};
  EXPECT_NEAR(loss_and_gradient(net, b, LossKind::cross_entropy).loss, std::log(2.0), 1e-15);
}

TEST(Loss, CrossEntropyShiftInvariant) {
  std::mt19937_64 rng(4);
  Mlp net({3, 4}, Activation::tanh, OutputMode::logits, 2);
  const auto b = classification_batch(6, 3, 4, rng);
  const double base = batch_loss(net, net.parameters(), b, LossKind::cross_entropy);
  auto shifted = net.parameters();
  for (std::size_t k = net.bias_offset(0); k < shifted.size(); ++k) shifted[k] += 7.5;
  EXPECT_NEAR(batch_loss(net, shifted, b, LossKind::cross_entropy), base, 1e-12);
}

TEST(Loss, CrossEntropyStableForLargeLogits) {
  Mlp net({1, 2}, Activation::tanh, OutputMode::logits);
  net.set_parameters(std::vector<double>{0.0, 0.0, 1000.0, 0.0});
  const Batch b{Matrix{{1.0}}, {}, {1}};
  const auto lg = loss_and_gradient(net, b, LossKind::cross_entropy);
  EXPECT_NEAR(lg.loss, 1000.0, 1e-9);
}

TEST(Loss, MseNonNegative) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const Mlp net({2, 3, 2}, Activation::relu, OutputMode::linear, static_cast<std::uint64_t>(i));
    EXPECT_GE(batch_loss(net, net.parameters(), regression_batch(4, 2, 2, rng), LossKind::mse), 0.0);
  }
}

TEST(Loss, BatchValidation) {
  const Mlp reg({2, 2}, Activation::tanh, OutputMode::linear);
  const Mlp cls({2, 2}, Activation::tanh, OutputMode::logits);
  EXPECT_THROW(loss_and_gradient(reg, Batch{Matrix(2, 2), Matrix(2, 3), {}}, LossKind::mse), DimensionError);
  EXPECT_THROW(loss_and_gradient(reg, Batch{Matrix(2, 2), {}, {0, 1}}, LossKind::cross_entropy), DimensionError);
  EXPECT_THROW(loss_and_gradient(cls, Batch{Matrix(2, 2), {}, {0, 2}}, LossKind::cross_entropy), DimensionError);
  EXPECT_THROW(loss_and_gradient(reg, Batch{Matrix(0, 2), Matrix(0, 2), {}}, LossKind::mse), DimensionError);
}

TEST(Loss, NonFiniteParametersRaise) {
  Mlp net({1, 1}, Activation::tanh, OutputMode::linear);
  net.set_parameters(std::vector<double>{INFINITY, 0.0});
  EXPECT_THROW(loss_and_gradient(net, Batch{Matrix{{1.0}}, Matrix{{0.0}}, {}}, LossKind::mse), NonFiniteGradient);
}

TEST(FiniteDifference, LinearModelExact) {
  Mlp net({1, 1}, Activation::tanh, OutputMode::linear);
  net.set_parameters(std::vector<double>{0.5, 0.0});
  const Batch b{Matrix{{2.0}}, Matrix{{3.0}}, {}};
  // L = (2w + c - 3)^2, dL/dw = 4 (2w + c - 3) = -8, dL/dc = -4.
  const auto fd = finite_difference_gradient(net, net.parameters(), b, LossKind::mse, 1e-4);
  EXPECT_NEAR(fd[0], -8.0, 1e-8);
  EXPECT_NEAR(fd[1], -4.0, 1e-8);
  EXPECT_THROW(finite_difference_gradient(net, net.parameters(), b, LossKind::mse, 0.0), DomainError);
}

TEST(FiniteDifference, ConstantLossHasZeroGradient) {
  Mlp net({1, 1}, Activation::relu, OutputMode::linear);
  const Batch b{Matrix{{0.0}, {0.0}}, Matrix{{1.0}, {1.0}}, {}};
  net.set_parameters(std::vector<double>{0.7, 1.0});
  const auto fd = finite_difference_gradient(net, net.parameters(), b, LossKind::mse, 1e-5);
  EXPECT_NEAR(fd[0], 0.0, 1e-12);
}

TEST(ReverseMode, MatchesCentralDifferences) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> width(1, 6), depth(1, 3), batch(1, 16);
  for (auto act : {Activation::tanh, Activation::silu, Activation::relu}) {
    for (auto kind : {LossKind::mse, LossKind::cross_entropy}) {
      for (int c = 0; c < 20; ++c) {
        std::vector<std::size_t> sizes{width(rng)};
        const std::size_t hidden = depth(rng);
        for (std::size_t l = 0; l < hidden; ++l) sizes.push_back(width(rng));
        sizes.push_back(kind == LossKind::mse ? width(rng) : 1 + width(rng));
        const auto mode = kind == LossKind::mse ? OutputMode::linear : OutputMode::logits;
        Mlp net(sizes, act, mode, rng());
        auto theta = net.parameters();
        std::normal_distribution<double> bias(0.0, 0.3);
        for (auto& t : theta) t += 0.1 * bias(rng);
        const std::size_t n = batch(rng);
        const auto b = kind == LossKind::mse ? regression_batch(n, sizes.front(), sizes.back(), rng)
                                             : classification_batch(n, sizes.front(), sizes.back(), rng);
        const auto rev = loss_and_gradient(net, theta, b, kind).grad;
        const auto fd = oracle::ld_central_differences(net, theta, b, kind, 1e-6L);
        for (std::size_t k = 0; k < rev.size(); ++k) {
          const double scale = std::max({std::abs(rev[k]), std::abs(fd[k]), 1e-6});
          EXPECT_LT(std::abs(rev[k] - fd[k]) / scale, 1e-5)
              << to_string(act) << " case " << c << " coord " << k << " rev " << rev[k] << " fd " << fd[k];
        }
      }
    }
  }
}

TEST(Activation, ParseNames) {
  EXPECT_EQ(parse_activation("tanh"), Activation::tanh);
  EXPECT_EQ(parse_activation("silu"), Activation::silu);
  EXPECT_EQ(parse_activation("relu"), Activation::relu);
  EXPECT_THROW(parse_activation("gelu"), DomainError);
}

TEST(Activation, FastTanhWithinFewUlpOfExtendedPrecision) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-25.0, 25.0);
  double worst = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double z = i < 5000 ? -25.0 + 1e-2 * i : u(rng);
    const long double exact = std::tanh(static_cast<long double>(z));
    const double got = detail::fast_tanh(z);
    if (exact == 0.0L) {
      EXPECT_EQ(got, 0.0);
      continue;
    }
    worst = std::max(worst, static_cast<double>(std::abs((got - exact) / exact)));
    EXPECT_EQ(got, -detail::fast_tanh(-z));
  }
  EXPECT_LT(worst, 4.0 * std::numeric_limits<double>::epsilon());
  EXPECT_EQ(detail::fast_tanh(0.0), 0.0);
  EXPECT_EQ(detail::fast_tanh(40.0), 1.0);
}

TEST(Activation, FastTanhDenseAcrossRationalBranchAndSwitchPoint) {
  double worst = 0.0;
  auto probe = [&](double z) {
    const long double exact = std::tanh(static_cast<long double>(z));
    worst = std::max(worst, static_cast<double>(std::abs((detail::fast_tanh(z) - exact) / exact)));
  };
  for (int i = 1; i <= 400000; ++i) probe(-1.0 + 2.0 * i / 400001.0);
  for (double z = 1e-300; z < 1e-2; z *= 1.05) probe(z);
  probe(std::nextafter(0.625, 0.0));
  probe(0.625);
  EXPECT_LT(worst, 2.0 * std::numeric_limits<double>::epsilon());
}
