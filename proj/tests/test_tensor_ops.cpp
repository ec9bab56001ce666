#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "pdnet/adam.hpp"
#include "pdnet/grad_check.hpp"
#include "pdnet/ops.hpp"
#include "pdnet/rng.hpp"
#include "pdnet/tensor_io.hpp"
#include "test_util.hpp"

using namespace pdnet;
using pdnet::testing::bit_identical;
using pdnet::testing::max_abs_diff;
using pdnet::testing::random_tensor;
using pdnet::testing::spaced_tensor;

namespace {

const Tensord kNoBias;

// Direct nested-loop cross-correlation, accumulated in double.
Tensord conv_oracle(const Tensord& x, const Tensord& w, const std::vector<double>& bias,
                    std::size_t stride, std::size_t pad) {
  const Shape xs = x.shape();
  const Shape ws = w.shape();
  const std::size_t k = ws.h;
  const std::size_t oh = (xs.h + 2 * pad - k) / stride + 1;
  const std::size_t ow = (xs.w + 2 * pad - k) / stride + 1;
  Tensord out = Tensord::zeros({xs.n, ws.n, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ws.n; ++co)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (std::size_t ci = 0; ci < xs.c; ++ci)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t b = 0; b < k; ++b) {
                const long r = long(i * stride + a) - long(pad);
                const long c = long(j * stride + b) - long(pad);
                if (r < 0 || c < 0 || r >= long(xs.h) || c >= long(xs.w)) continue;
                acc += x.at(n, ci, r, c) * w.at(co, ci, a, b);
              }
          out.at(n, co, i, j) = acc;
        }
  return out;
}

double inner(const Tensord& a, const Tensord& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

template <typename Real>
Tensor<Real> probe_weights(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return random_tensor<Real>(s, rng, -1.0, 1.0);
}

}  // namespace

// ============================================================================
// Tensor basics
// ============================================================================

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensorf::from_data({1, 1, 2, 2}, {1, 2, 3}), ShapeError);
  Tensorf t = Tensorf::zeros({2, 3, 4, 5});
  EXPECT_EQ(t.numel(), 120u);
  EXPECT_TRUE(t.grad().empty());
  t.set_requires_grad(true);
  EXPECT_EQ(t.grad().size(), 120u);
}

TEST(Tensor, CloneIsDeep) {
  Tensorf a = Tensorf::full({1, 1, 2, 2}, 3.0f);
  Tensorf b = a.clone();
  b.data()[0] = 7.0f;
  EXPECT_EQ(a.data()[0], 3.0f);
  Tensorf alias = a;
  alias.data()[1] = 5.0f;
  EXPECT_EQ(a.data()[1], 5.0f);
}

// ============================================================================
// conv2d
// ============================================================================

TEST(Conv2d, BoxSumCenterAndCorner) {
  Tensorf x = Tensorf::full({1, 1, 3, 3}, 1.0f);
  Tensorf w = Tensorf::full({1, 1, 3, 3}, 1.0f);
  Tensorf b = Tensorf::zeros({1, 1, 1, 1});
  Tensorf y = ops::conv2d(x, w, b, {1, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  EXPECT_FLOAT_EQ(y.at(0, 0, 1, 1), 9.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 0), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 2, 2), 4.0f);
  EXPECT_FLOAT_EQ(y.at(0, 0, 0, 1), 6.0f);
}

TEST(Conv2d, ScalarAffineForm) {
  Tensorf x = Tensorf::full({1, 1, 1, 1}, 0.75f);
  Tensorf w = Tensorf::full({1, 1, 1, 1}, -2.0f);
  Tensorf b = Tensorf::full({1, 1, 1, 1}, 0.5f);
  EXPECT_FLOAT_EQ(ops::conv2d(x, w, b, {1, 0}).item(), -2.0f * 0.75f + 0.5f);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Tensord x = random_tensor<double>({2, 3, 8, 8}, rng);
    Tensord w = random_tensor<double>({4, 3, 3, 3}, rng);
    std::vector<double> bias = {0.1, -0.2, 0.3, 0.0};
    Tensord b = Tensord::from_data({1, 4, 1, 1}, bias);
    for (std::size_t stride : {1u, 2u}) {
      Tensord expect = conv_oracle(x, w, bias, stride, 1);
      Tensord got = ops::conv2d(x, w, b, {stride, 1});
      ASSERT_EQ(got.shape(), expect.shape());
      EXPECT_LT(max_abs_diff(got, expect), 1e-12);
      // Float path against the same oracle at the stated 1e-5 tolerance.
      Tensorf gotf = ops::conv2d(x.cast<float>(), w.cast<float>(), b.cast<float>(), {stride, 1});
      EXPECT_LT(max_abs_diff(gotf.cast<double>(), expect), 1e-5);
    }
  }
}

TEST(Conv2d, ShapeErrors) {
  Tensorf x = Tensorf::zeros({1, 2, 4, 4});
  EXPECT_THROW(ops::conv2d(x, Tensorf::zeros({1, 3, 3, 3}), Tensorf{}, {1, 1}), ShapeError);
  EXPECT_THROW(ops::conv2d(Tensorf::zeros({1, 2, 1, 1}), Tensorf::zeros({1, 2, 3, 3}), Tensorf{}, {1, 0}),
               ShapeError);
  EXPECT_THROW(ops::conv2d(x, Tensorf::zeros({1, 2, 3, 3}), Tensorf::zeros({1, 2, 1, 1}), {1, 1}),
               ShapeError);
}

TEST(Conv2d, LinearityUpToBias) {
  Rng rng(11);
  Tensord a = random_tensor<double>({1, 2, 6, 6}, rng);
  Tensord c = random_tensor<double>({1, 2, 6, 6}, rng);
  Tensord w = random_tensor<double>({3, 2, 3, 3}, rng);
  Tensord b = random_tensor<double>({1, 3, 1, 1}, rng);
  Tensord sum = a.clone();
  for (std::size_t i = 0; i < sum.numel(); ++i) sum.data()[i] += c.data()[i];
  Tensord lhs = ops::conv2d(sum, w, b, {1, 1});
  Tensord ya = ops::conv2d(a, w, b, {1, 1});
  Tensord yc = ops::conv2d(c, w, b, {1, 1});
  Tensord y0 = ops::conv2d(Tensord::zeros(a.shape()), w, b, {1, 1});  // the bias term
  double worst = 0.0;
  for (std::size_t i = 0; i < lhs.numel(); ++i) {
    worst = std::max(worst, std::abs(lhs.data()[i] - (ya.data()[i] + yc.data()[i] - y0.data()[i])));
  }
  EXPECT_LT(worst, 1e-5);
}

// ============================================================================
// transposed_conv2d
// ============================================================================

TEST(TransposedConv2d, DisjointBlocks) {
  Tensorf x = Tensorf::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensorf w = Tensorf::full({1, 1, 2, 2}, 1.0f);
  Tensorf y = ops::transposed_conv2d(x, w, Tensorf{}, {2, 0});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  const float expect[4][4] = {{1, 1, 2, 2}, {1, 1, 2, 2}, {3, 3, 4, 4}, {3, 3, 4, 4}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_FLOAT_EQ(y.at(0, 0, i, j), expect[i][j]);
}

TEST(TransposedConv2d, ZeroInputGivesBias) {
  Tensorf x = Tensorf::zeros({2, 3, 3, 3});
  Rng rng(3);
  Tensorf w = random_tensor<float>({3, 2, 2, 2}, rng);
  Tensorf b = Tensorf::from_data({1, 2, 1, 1}, {0.25f, -1.5f});
  Tensorf y = ops::transposed_conv2d(x, w, b, {2, 0});
  ASSERT_EQ(y.shape(), (Shape{2, 2, 6, 6}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(y.at(n, c, i, j), b.data()[c]);
}

TEST(TransposedConv2d, AdjointOfConv) {
  struct Case {
    std::size_t k, stride, pad, h;
  };
  for (const Case cs : {Case{3, 1, 1, 5}, Case{2, 2, 0, 6}, Case{3, 2, 1, 7}, Case{3, 1, 0, 5}}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed * 31 + cs.k);
      // conv maps [1,2,h,h] -> [1,3,ho,ho]; tconv shares the same [3,2,k,k] weight.
      Tensord w = random_tensor<double>({3, 2, cs.k, cs.k}, rng);
      Tensord a = random_tensor<double>({1, 2, cs.h, cs.h}, rng);
      Tensord ca = ops::conv2d(a, w, kNoBias, {cs.stride, cs.pad});
      Tensord b = random_tensor<double>(ca.shape(), rng);
      Tensord tb = ops::transposed_conv2d(b, w, kNoBias, {cs.stride, cs.pad});
      if (tb.shape() != a.shape()) continue;  // geometry not exactly invertible
      const double lhs = inner(ca, b);
      const double rhs = inner(a, tb);
      EXPECT_LT(std::abs(lhs - rhs), 1e-5 * std::max(1.0, std::abs(lhs))) << "k=" << cs.k;
    }
  }
}

TEST(TransposedConv2d, NonPositiveExtentIsError) {
  EXPECT_THROW(ops::transposed_conv2d(Tensorf::zeros({1, 1, 1, 1}), Tensorf::zeros({1, 1, 1, 1}),
                                      Tensorf{}, {1, 1}),
               ShapeError);
}

// ============================================================================
// max_pool2d
// ============================================================================

TEST(MaxPool, SingleWindow) {
  Tensorf x = Tensorf::from_data({1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tape tape;
  Tensorf y = ops::max_pool2d(x, &tape);
  EXPECT_FLOAT_EQ(y.item(), 4.0f);
  backward(ops::sum(y, &tape), tape);
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{0, 0, 0, 1}));
}

TEST(MaxPool, TiesGoToFirstElement) {
  Tensorf x = Tensorf::full({1, 2, 4, 4}, 0.5f, true);
  Tape tape;
  Tensorf y = ops::max_pool2d(x, &tape);
  for (float v : y.data()) EXPECT_EQ(v, 0.5f);
  backward(ops::sum(y, &tape), tape);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        const float g = x.grad()[x.index(0, c, i, j)];
        EXPECT_EQ(g, (i % 2 == 0 && j % 2 == 0) ? 1.0f : 0.0f);
      }
}

TEST(MaxPool, MatchesBruteForce) {
  Rng rng(5);
  Tensorf x = random_tensor<float>({1, 2, 8, 8}, rng);
  Tensorf y = ops::max_pool2d(x);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        float m = -INFINITY;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) m = std::max(m, x.at(0, c, 2 * i + a, 2 * j + b));
        EXPECT_EQ(y.at(0, c, i, j), m);
      }
}

TEST(MaxPool, OddExtentIsError) {
  EXPECT_THROW(ops::max_pool2d(Tensorf::zeros({1, 1, 3, 4})), ShapeError);
}

// ============================================================================
// batch_norm
// ============================================================================

TEST(BatchNorm, NormalizesPerChannel) {
  Rng rng(9);
  Tensorf x = random_tensor<float>({4, 3, 5, 5}, rng, -3.0, 7.0);
  auto stats = ops::BatchNormStats<float>::fresh(3);
  Tensorf y = ops::batch_norm(x, Tensorf::full({1, 3, 1, 1}, 1), Tensorf::zeros({1, 3, 1, 1}), stats,
                              {.training = true});
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) s += y.data()[(n * 3 + c) * 25 + i];
    const double mu = s / 100;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) ss += std::pow(y.data()[(n * 3 + c) * 25 + i] - mu, 2);
    EXPECT_LT(std::abs(mu), 1e-6);
    EXPECT_LT(std::abs(ss / 100 - 1.0), 1e-4);
  }
  // Running statistics moved 10% of the way toward the batch statistics.
  EXPECT_NE(stats.running_mean.data()[0], 0.0f);
}

TEST(BatchNorm, ZeroGammaGivesBeta) {
  Rng rng(1);
  Tensorf x = random_tensor<float>({2, 2, 3, 3}, rng);
  Tensorf beta = Tensorf::from_data({1, 2, 1, 1}, {0.3f, -0.7f});
  auto stats = ops::BatchNormStats<float>::fresh(2);
  for (bool training : {true, false}) {
    Tensorf y = ops::batch_norm(x, Tensorf::zeros({1, 2, 1, 1}), beta, stats, {.training = training});
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y.data()[(n * 2 + c) * 9 + i], beta.data()[c]);
  }
}

TEST(BatchNorm, EvalUsesRunningStats) {
  auto stats = ops::BatchNormStats<double>::fresh(1);
  stats.running_mean.data()[0] = 2.0;
  stats.running_var.data()[0] = 4.0;
  Tensord x = Tensord::full({1, 1, 1, 1}, 6.0);
  Tensord y = ops::batch_norm(x, Tensord::full({1, 1, 1, 1}, 1), Tensord::zeros({1, 1, 1, 1}), stats,
                              {.training = false});
  EXPECT_NEAR(y.item(), 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_EQ(stats.running_mean.data()[0], 2.0);
}

TEST(BatchNorm, SingleElementChannelInTrainingIsError) {
  auto stats = ops::BatchNormStats<float>::fresh(2);
  EXPECT_THROW(ops::batch_norm(Tensorf::zeros({1, 2, 1, 1}), Tensorf::full({1, 2, 1, 1}, 1),
                               Tensorf::zeros({1, 2, 1, 1}), stats, {.training = true}),
               ShapeError);
}

// ============================================================================
// Elementwise, layout, combine
// ============================================================================

TEST(Activations, ScalarValues) {
  EXPECT_FLOAT_EQ(ops::sigmoid(Tensorf::scalar(0)).item(), 0.5f);
  EXPECT_FLOAT_EQ(ops::relu(Tensorf::scalar(-3)).item(), 0.0f);
  EXPECT_FLOAT_EQ(ops::relu(Tensorf::scalar(3)).item(), 3.0f);
  Tensorf x = Tensorf::scalar(0, true);
  Tape tape;
  backward(ops::sigmoid(x, &tape), tape);
  EXPECT_FLOAT_EQ(x.grad()[0], 0.25f);
}

TEST(Activations, SigmoidStaysInsideOpenInterval) {
  Tensorf x = Tensorf::from_data({1, 1, 1, 4}, {-200.f, -30.f, 30.f, 200.f});
  Tensorf y = ops::sigmoid(x);
  for (float v : y.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  Tensord xd = Tensord::from_data({1, 1, 1, 2}, {-800., 800.});
  Tensord yd = ops::sigmoid(xd);
  for (double v : yd.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Activations, ReluSubgradientAtZeroIsZero) {
  Tensorf x = Tensorf::zeros({1, 1, 1, 3}, true);
  Tape tape;
  backward(ops::sum(ops::relu(x, &tape), &tape), tape);
  for (float g : x.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(ConcatChannels, IdentityAndOrder) {
  Tensorf a = Tensorf::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensorf b = Tensorf::from_data({1, 1, 2, 2}, {5, 6, 7, 8});
  std::vector<Tensorf> one{a};
  EXPECT_TRUE(bit_identical(ops::concat_channels<float>(one), a));
  std::vector<Tensorf> two{a, b};
  Tensorf y = ops::concat_channels<float>(two);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()), (std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8}));
}

TEST(ConcatChannels, BackwardOfSumIsOnes) {
  Rng rng(2);
  std::vector<Tensorf> parts{random_tensor<float>({2, 1, 3, 3}, rng), random_tensor<float>({2, 3, 3, 3}, rng),
                             random_tensor<float>({2, 2, 3, 3}, rng)};
  for (auto& p : parts) p.set_requires_grad(true);
  Tape tape;
  backward(ops::sum(ops::concat_channels<float>(parts, &tape), &tape), tape);
  for (const auto& p : parts)
    for (float g : p.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(ConcatChannels, Errors) {
  std::vector<Tensorf> none;
  EXPECT_THROW(ops::concat_channels<float>(none), ShapeError);
  std::vector<Tensorf> bad{Tensorf::zeros({1, 1, 2, 2}), Tensorf::zeros({1, 1, 2, 3})};
  EXPECT_THROW(ops::concat_channels<float>(bad), ShapeError);
}

TEST(CenterCrop, Conventions) {
  std::vector<float> v(16);
  std::iota(v.begin(), v.end(), 0.0f);
  Tensorf x = Tensorf::from_data({1, 1, 4, 4}, v);
  EXPECT_TRUE(bit_identical(ops::center_crop(x, 4, 4), x));
  Tensorf c = ops::center_crop(x, 2, 2);
  EXPECT_EQ(std::vector<float>(c.data().begin(), c.data().end()), (std::vector<float>{5, 6, 9, 10}));

  std::vector<float> v5(25);
  std::iota(v5.begin(), v5.end(), 0.0f);
  Tensorf odd = ops::center_crop(Tensorf::from_data({1, 1, 5, 5}, v5), 2, 2);
  // rows {1,2}, cols {1,2}
  EXPECT_EQ(std::vector<float>(odd.data().begin(), odd.data().end()), (std::vector<float>{6, 7, 11, 12}));
  EXPECT_THROW(ops::center_crop(x, 5, 2), ShapeError);
}

TEST(ScaleCombine, AlphaZeroAndZeroGate) {
  Rng rng(4);
  Tensorf a = random_tensor<float>({1, 2, 3, 3}, rng);
  Tensorf b = random_tensor<float>({1, 2, 3, 3}, rng);
  for (auto mode : {ops::CombineMode::add, ops::CombineMode::gate}) {
    EXPECT_TRUE(bit_identical(ops::scale_combine(a, b, 0.0, mode), a));
  }
  EXPECT_TRUE(bit_identical(ops::scale_combine(a, Tensorf::zeros(a.shape()), 0.7, ops::CombineMode::gate), a));
  EXPECT_THROW(ops::scale_combine(a, Tensorf::zeros({1, 2, 3, 4}), 1.0, ops::CombineMode::add), ShapeError);
}

TEST(ScaleCombine, AddGradientIsAlphaTimesUpstream) {
  Rng rng(6);
  Tensord a = random_tensor<double>({1, 2, 4, 4}, rng);
  Tensord b = random_tensor<double>({1, 2, 4, 4}, rng).set_requires_grad(true);
  Tensord r = random_tensor<double>({1, 2, 4, 4}, rng);
  Tape tape;
  backward(ops::dot_constant(ops::scale_combine(a, b, 0.37, ops::CombineMode::add, &tape), r, &tape), tape);
  for (std::size_t i = 0; i < r.numel(); ++i) EXPECT_NEAR(b.grad()[i], 0.37 * r.data()[i], 1e-15);
}

// ============================================================================
// backward / tape
// ============================================================================

TEST(Backward, SumAndSigmoid) {
  Tensorf x = Tensorf::zeros({1, 2, 3, 3}, true);
  Tape tape;
  backward(ops::sum(x, &tape), tape);
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
  x.zero_grad();
  tape.reset();
  backward(ops::sum(ops::sigmoid(x, &tape), &tape), tape);
  for (float g : x.grad()) EXPECT_FLOAT_EQ(g, 0.25f);
}

TEST(Backward, GradientsSumOverPaths) {
  Tensord x = Tensord::full({1, 1, 2, 2}, 0.5, true);
  Tape tape;
  std::vector<Tensord> parts{x, ops::relu(x, &tape)};
  backward(ops::sum(ops::concat_channels<double>(parts, &tape), &tape), tape);
  for (double g : x.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Backward, ConsumedTapeAndNonScalarAreErrors) {
  Tensorf x = Tensorf::zeros({1, 1, 2, 2}, true);
  Tape tape;
  Tensorf loss = ops::sum(x, &tape);
  EXPECT_THROW(backward(ops::relu(x, &tape), tape), AutodiffError);
  backward(loss, tape);
  EXPECT_TRUE(tape.consumed());
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_THROW(backward(loss, tape), AutodiffError);
  Tape cleared;
  Tensorf l2 = ops::sum(x, &cleared);
  cleared.clear();
  EXPECT_THROW(backward(l2, cleared), AutodiffError);
}

TEST(Backward, UnreachableParameterKeepsZeroGradient) {
  Tensorf used = Tensorf::full({1, 1, 1, 2}, 1.0f, true);
  Tensorf unused = Tensorf::full({1, 1, 1, 2}, 1.0f, true);
  Tape tape;
  backward(ops::sum(used, &tape), tape);
  for (float g : unused.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(Backward, UntrackedWithoutTape) {
  Tensorf x = Tensorf::zeros({1, 1, 2, 2}, true);
  EXPECT_FALSE(ops::relu(x).requires_grad());
}

// ============================================================================
// Adam
// ============================================================================

TEST(Adam, ZeroGradientLeavesParametersButCountsStep) {
  ParameterList<float> params{{"w", Tensorf::full({1, 1, 2, 2}, 0.3f, true)}};
  AdamState<float> state;
  adam_step<float>(params, state, 1e-3);
  EXPECT_EQ(state.step, 1u);
  for (float v : params[0].value.data()) EXPECT_EQ(v, 0.3f);
}

TEST(Adam, FirstStepClosedForm) {
  Rng rng(8);
  Tensord w = random_tensor<double>({1, 1, 3, 3}, rng).set_requires_grad(true);
  Tensord before = w.clone();
  Tensord g = random_tensor<double>({1, 1, 3, 3}, rng);
  std::copy(g.data().begin(), g.data().end(), w.grad().begin());
  ParameterList<double> params{{"w", w}};
  AdamState<double> state;
  const double lr = 1e-3;
  adam_step<double>(params, state, lr);
  for (std::size_t i = 0; i < 9; ++i) {
    // m_hat = g, v_hat = g^2 after one step.
    const double gi = g.data()[i];
    const double expect = before.data()[i] - lr * gi / (std::abs(gi) + 1e-8);
    EXPECT_NEAR(w.data()[i], expect, 1e-6);
    EXPECT_NEAR(std::abs(w.data()[i] - before.data()[i]), lr, 1e-6);
  }
}

TEST(Adam, FrozenParameterUnchanged) {
  Tensorf w = Tensorf::full({1, 1, 1, 3}, 1.0f, true);
  std::fill(w.grad().begin(), w.grad().end(), 5.0f);
  ParameterList<float> params{{"enc", w, ParamGroup::master_encoder, /*frozen=*/true}};
  AdamState<float> state;
  adam_step<float>(params, state, 1e-2);
  for (float v : w.data()) EXPECT_EQ(v, 1.0f);
  EXPECT_TRUE(state.first_moment[0].empty());
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Tensorf ok = Tensorf::full({1, 1, 1, 1}, 1.0f, true);
  ok.grad()[0] = 1.0f;
  Tensorf bad = Tensorf::full({1, 1, 1, 1}, 1.0f, true);
  bad.grad()[0] = NAN;
  ParameterList<float> params{{"ok", ok}, {"dec.b2.conv.weight", bad}};
  AdamState<float> state;
  try {
    adam_step<float>(params, state, 1e-3);
    FAIL() << "expected an error";
  } catch (const AutodiffError& e) {
    EXPECT_NE(std::string(e.what()).find("dec.b2.conv.weight"), std::string::npos);
  }
  EXPECT_EQ(ok.data()[0], 1.0f);
  EXPECT_EQ(state.step, 0u);
}

// ============================================================================
// truncated normal / Rng
// ============================================================================

TEST(TruncatedNormal, BoundsMeanAndDeterminism) {
  Rng rng(2024);
  const double stddev = 0.1;
  Tensorf t = truncated_normal_init<float>({1, 1, 1, 100000}, stddev, rng);
  double sum = 0.0, sq = 0.0;
  for (float v : t.data()) {
    EXPECT_LE(std::abs(v), static_cast<float>(2 * stddev));
    sum += v;
    sq += double(v) * v;
  }
  const double n = 1e5;
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  EXPECT_LT(std::abs(mean), 3.0 * sd / std::sqrt(n));
  // Truncating at 2 sigma shrinks the std to about 0.88 sigma.
  EXPECT_NEAR(sd, 0.0880 * 1.0, 0.002);

  Rng r1(77), r2(77);
  EXPECT_TRUE(bit_identical(truncated_normal_init<float>({2, 3, 3, 3}, 0.1, r1),
                            truncated_normal_init<float>({2, 3, 3, 3}, 0.1, r2)));
}

TEST(Rng, SplitMix64ReferenceStream) {
  // Reference values of SplitMix64 seeded with 0.
  Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next_u64(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.next_u64(), 0x06c45d188009454fULL);
}

// ============================================================================
// Gradient checks
// ============================================================================

namespace {

template <typename Real>
struct OpCase {
  const char* name;
  std::vector<Tensor<Real>> inputs;
  std::function<Tensor<Real>(std::vector<Tensor<Real>>&, Tape*)> op;
};

template <typename Real>
std::vector<OpCase<Real>> op_cases(std::uint64_t seed) {
  Rng rng(seed);
  using T = Tensor<Real>;
  const Shape s{1, 2, 6, 6};
  std::vector<OpCase<Real>> cases;
  cases.push_back({"conv2d",
                   {random_tensor<Real>(s, rng), random_tensor<Real>({3, 2, 3, 3}, rng),
                    random_tensor<Real>({1, 3, 1, 1}, rng)},
                   [](auto& in, Tape* t) { return ops::conv2d(in[0], in[1], in[2], {1, 1}, t); }});
  cases.push_back({"conv2d_stride2",
                   {random_tensor<Real>(s, rng), random_tensor<Real>({3, 2, 3, 3}, rng)},
                   [](auto& in, Tape* t) { return ops::conv2d(in[0], in[1], T{}, {2, 1}, t); }});
  cases.push_back({"transposed_conv2d",
                   {random_tensor<Real>({1, 2, 3, 3}, rng), random_tensor<Real>({2, 3, 2, 2}, rng),
                    random_tensor<Real>({1, 3, 1, 1}, rng)},
                   [](auto& in, Tape* t) { return ops::transposed_conv2d(in[0], in[1], in[2], {2, 0}, t); }});
  cases.push_back({"max_pool2d", {spaced_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::max_pool2d(in[0], t); }});
  cases.push_back({"batch_norm_train",
                   {random_tensor<Real>(s, rng), random_tensor<Real>({1, 2, 1, 1}, rng, 0.5, 1.5),
                    random_tensor<Real>({1, 2, 1, 1}, rng)},
                   [](auto& in, Tape* t) {
                     auto st = ops::BatchNormStats<Real>::fresh(2);
                     return ops::batch_norm(in[0], in[1], in[2], st, {.training = true}, t);
                   }});
  cases.push_back({"batch_norm_eval",
                   {random_tensor<Real>(s, rng), random_tensor<Real>({1, 2, 1, 1}, rng, 0.5, 1.5),
                    random_tensor<Real>({1, 2, 1, 1}, rng)},
                   [](auto& in, Tape* t) {
                     auto st = ops::BatchNormStats<Real>::fresh(2);
                     st.running_mean.data()[0] = Real(0.2);
                     st.running_var.data()[1] = Real(2.5);
                     return ops::batch_norm(in[0], in[1], in[2], st, {.training = false}, t);
                   }});
  // Relu probed away from the kink: |x| >= 0.025 > 10 * eps.
  cases.push_back({"relu", {spaced_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::relu(in[0], t); }});
  cases.push_back({"sigmoid", {random_tensor<Real>(s, rng, -4, 4)},
                   [](auto& in, Tape* t) { return ops::sigmoid(in[0], t); }});
  cases.push_back({"concat_channels",
                   {random_tensor<Real>(s, rng), random_tensor<Real>({1, 1, 6, 6}, rng)},
                   [](auto& in, Tape* t) { return ops::concat_channels<Real>(in, t); }});
  cases.push_back({"center_crop", {random_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::center_crop(in[0], 3, 4, t); }});
  cases.push_back({"scale_combine_add", {random_tensor<Real>(s, rng), random_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::scale_combine(in[0], in[1], 0.7, ops::CombineMode::add, t); }});
  cases.push_back({"scale_combine_gate", {random_tensor<Real>(s, rng), random_tensor<Real>(s, rng)},
                   [](auto& in, Tape* t) { return ops::scale_combine(in[0], in[1], 1.3, ops::CombineMode::gate, t); }});
  cases.push_back({"upsample_nearest", {random_tensor<Real>({1, 2, 3, 3}, rng)},
                   [](auto& in, Tape* t) { return ops::upsample_nearest(in[0], 2, t); }});
  return cases;
}

// Reduces an op output to a scalar with fixed random weights so every output
// element contributes a distinct amount.
template <typename Real>
GradCheckReport check_case(OpCase<Real>& c, std::uint64_t seed, double eps) {
  const Shape out_shape = c.op(c.inputs, nullptr).shape();
  Tensor<Real> r = probe_weights<Real>(out_shape, seed + 1000);
  return grad_check<Real>(
      [&](Tape* t) { return ops::dot_constant(c.op(c.inputs, t), r, t); }, c.inputs, eps);
}

}  // namespace

TEST(GradCheck, SumOfSquaresIsExactInDouble) {
  Rng rng(0);
  std::vector<Tensord> in{random_tensor<double>({1, 2, 3, 3}, rng)};
  // sum(x * (1 + x)) - sum(x) = sum(x^2)
  const std::vector<double> w{1.0, -1.0};
  auto report = grad_check<double>(
      [&](Tape* t) {
        std::vector<Tensord> terms{ops::sum(ops::scale_combine(in[0], in[0], 1.0, ops::CombineMode::gate, t), t),
                                   ops::sum(in[0], t)};
        return ops::weighted_sum<double>(terms, w, t);
      },
      in);
  EXPECT_LT(report.max_rel_error, 1e-6);
}

TEST(GradCheck, RetryStepsStepAroundKinks) {
  std::vector<Tensord> in{Tensord::from_data({1, 1, 1, 2}, {3e-6, 0.5})};
  auto f = [&](Tape* t) { return ops::sum(ops::relu(in[0], t), t); };
  EXPECT_GT(grad_check<double>(f, in, 1e-5).max_rel_error, 0.1);
  const double retry[] = {1e-6, 1e-7};
  EXPECT_LT(grad_check<double>(f, in, 1e-5, retry).max_rel_error, 1e-9);
}

TEST(GradCheck, EveryOpDoublePrecision) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cases = op_cases<double>(seed);
    for (auto& c : cases) {
      auto report = check_case(c, seed, 1e-5);
      EXPECT_LT(report.max_rel_error, 1e-5) << c.name << " seed " << seed;
    }
  }
}

TEST(GradCheck, EveryOpSinglePrecision) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cases = op_cases<float>(seed);
    auto twins = op_cases<double>(seed);
    for (std::size_t k = 0; k < cases.size(); ++k) {
      auto& c = cases[k];
      auto& ref = twins[k];
      const Shape out_shape = c.op(c.inputs, nullptr).shape();
      Tensorf r = probe_weights<float>(out_shape, seed + 1000);
      Tensord rd = r.cast<double>();
      auto report = grad_check_mixed<float, double>(
          [&](Tape* t) { return ops::dot_constant(c.op(c.inputs, t), r, t); }, c.inputs,
          [&](Tape* t) { return ops::dot_constant(ref.op(ref.inputs, t), rd, t); }, ref.inputs, 1e-3);
      EXPECT_LT(report.max_rel_error, 1e-3)
          << c.name << " seed " << seed << " analytic " << report.worst_analytic << " numeric "
          << report.worst_numeric;
    }
  }
}

// ============================================================================
// PDT1
// ============================================================================

TEST(TensorIo, ByteLayout) {
  Tensorf t = Tensorf::from_data({1, 1, 1, 2}, {1.0f, -2.0f});
  std::ostringstream os;
  io::write_tensor(os, t);
  const std::string bytes = os.str();
  ASSERT_EQ(bytes.size(), 4u + 4 + 16 + 1 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "PDT1");
  EXPECT_EQ(bytes[4], 4);
  EXPECT_EQ(bytes[8], 1);   // n
  EXPECT_EQ(bytes[20], 2);  // w
  EXPECT_EQ(bytes[24], 0);  // f32
  // 1.0f = 0x3f800000 little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[27]), 0x80);
  EXPECT_EQ(static_cast<unsigned char>(bytes[28]), 0x3f);
}

TEST(TensorIo, RoundTripAndCorruption) {
  Rng rng(12);
  Tensord t = random_tensor<double>({2, 3, 4, 5}, rng);
  std::stringstream ss;
  io::write_tensor(ss, t);
  EXPECT_TRUE(bit_identical(io::read_tensor<double>(ss), t));

  std::string bytes;
  {
    std::ostringstream os;
    io::write_tensor(os, t);
    bytes = os.str();
  }
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream in1(bad_magic);
  EXPECT_THROW(io::read_tensor<double>(in1), DataError);
  std::istringstream in2(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(io::read_tensor<double>(in2), DataError);
  std::string bad_tag = bytes;
  bad_tag[24] = 7;
  std::istringstream in3(bad_tag);
  EXPECT_THROW(io::read_tensor<double>(in3), DataError);
}
