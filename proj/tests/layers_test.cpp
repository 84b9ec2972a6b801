#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "vshuffle/layers.hpp"

namespace vshuffle {
namespace {

// Direct six-loop convolution, one frame at a time.
Tensor64 naive_conv(const Tensor64& x, const Conv2dParams<double>& p) {
  const Shape& s = x.shape();
  const Conv2dGeometry& g = p.geom;
  const std::int64_t oh = (s.h + 2 * g.padding - g.kernel_h) / g.stride + 1;
  const std::int64_t ow = (s.w + 2 * g.padding - g.kernel_w) / g.stride + 1;
  Tensor64 y(Shape{s.n, s.t, g.out_channels, oh, ow});
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t t = 0; t < s.t; ++t)
      for (std::int64_t o = 0; o < g.out_channels; ++o)
        for (std::int64_t i = 0; i < oh; ++i)
          for (std::int64_t j = 0; j < ow; ++j) {
            double acc = p.bias ? (*p.bias)[static_cast<std::size_t>(o)] : 0.0;
            for (std::int64_t c = 0; c < g.in_channels; ++c)
              for (std::int64_t ki = 0; ki < g.kernel_h; ++ki)
                for (std::int64_t kj = 0; kj < g.kernel_w; ++kj) {
                  const std::int64_t hi = i * g.stride - g.padding + ki;
                  const std::int64_t wi = j * g.stride - g.padding + kj;
                  if (hi < 0 || hi >= s.h || wi < 0 || wi >= s.w) continue;
                  acc += p.weight.at(o, 0, c, ki, kj) * x.at(n, t, c, hi, wi);
                }
            y.at(n, t, o, i, j) = acc;
          }
  return y;
}

// Same loops run backwards: scatter grad_out through each weight tap.
Conv2dGrads<double> naive_conv_backward(const Tensor64& x, const Conv2dParams<double>& p,
                                        const Tensor64& gy) {
  const Shape& s = x.shape();
  const Conv2dGeometry& g = p.geom;
  Conv2dGrads<double> out{Tensor64(s), Tensor64(g.weight_shape()), std::nullopt};
  if (g.bias) out.grad_b = Tensor64(Shape{1, 1, g.out_channels, 1, 1});
  const Shape& gs = gy.shape();
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t t = 0; t < s.t; ++t)
      for (std::int64_t o = 0; o < g.out_channels; ++o)
        for (std::int64_t i = 0; i < gs.h; ++i)
          for (std::int64_t j = 0; j < gs.w; ++j) {
            const double d = gy.at(n, t, o, i, j);
            if (out.grad_b) (*out.grad_b)[static_cast<std::size_t>(o)] += d;
            for (std::int64_t c = 0; c < g.in_channels; ++c)
              for (std::int64_t ki = 0; ki < g.kernel_h; ++ki)
                for (std::int64_t kj = 0; kj < g.kernel_w; ++kj) {
                  const std::int64_t hi = i * g.stride - g.padding + ki;
                  const std::int64_t wi = j * g.stride - g.padding + kj;
                  if (hi < 0 || hi >= s.h || wi < 0 || wi >= s.w) continue;
                  out.grad_w.at(o, 0, c, ki, kj) += d * x.at(n, t, c, hi, wi);
                  out.grad_x.at(n, t, c, hi, wi) += d * p.weight.at(o, 0, c, ki, kj);
                }
          }
  return out;
}

double max_abs_diff(const Tensor64& a, const Tensor64& b) {
  EXPECT_EQ(a.shape(), b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(Conv2d, OneByOneIdentity) {
  Conv2dGeometry g{3, 3, 1, 1, 1, 0, false};
  auto p = Conv2dParams<float>::make(g);
  for (std::int64_t c = 0; c < 3; ++c) p.weight.at(c, 0, c, 0, 0) = 1.0f;
  std::mt19937_64 rng(1);
  Tensor32 x(Shape{2, 2, 3, 4, 5});
  fill_normal(x, rng);
  EXPECT_TRUE(identical(conv2d_forward(x, p), x));
}

TEST(Conv2d, AllOnesFootprint) {
  Conv2dGeometry g{1, 1, 3, 3, 1, 1, false};
  auto p = Conv2dParams<float>::make(g);
  p.weight.fill(1.0f);
  Tensor32 x(Shape{1, 1, 1, 5, 5});
  x.fill(1.0f);
  const Tensor32 y = conv2d_forward(x, p);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 5, 5}));
  for (std::int64_t i = 1; i < 4; ++i)
    for (std::int64_t j = 1; j < 4; ++j) EXPECT_EQ(y.at(0, 0, 0, i, j), 9.0f);
  for (auto [i, j] : {std::pair{0, 0}, {0, 4}, {4, 0}, {4, 4}}) EXPECT_EQ(y.at(0, 0, 0, i, j), 4.0f);
  EXPECT_EQ(y.at(0, 0, 0, 0, 2), 6.0f);
}

struct ConvCase {
  Conv2dGeometry geom;
  Shape input;
};

class ConvOracle : public ::testing::TestWithParam<ConvCase> {};

TEST_P(ConvOracle, ForwardAndBackwardMatchNaiveLoops) {
  const ConvCase& cc = GetParam();
  std::mt19937_64 rng(42);
  auto p = Conv2dParams<double>::make(cc.geom);
  fill_normal(p.weight, rng);
  if (p.bias) fill_normal(*p.bias, rng);
  Tensor64 x(cc.input);
  fill_normal(x, rng);

  const Tensor64 y = conv2d_forward(x, p);
  const Tensor64 ref = naive_conv(x, p);
  EXPECT_LE(max_abs_diff(y, ref), 1e-5);

  Tensor64 gy(y.shape());
  fill_normal(gy, rng);
  const auto grads = conv2d_backward(x, p, gy);
  const auto want = naive_conv_backward(x, p, gy);
  EXPECT_LE(max_abs_diff(grads.grad_x, want.grad_x), 1e-5);
  EXPECT_LE(max_abs_diff(grads.grad_w, want.grad_w), 1e-5);
  ASSERT_EQ(grads.grad_b.has_value(), want.grad_b.has_value());
  if (want.grad_b) {
    EXPECT_LE(max_abs_diff(*grads.grad_b, *want.grad_b), 1e-5);
  }
}

TEST(Conv2d, FloatMatchesDoubleOracle) {
  Conv2dGeometry g{3, 5, 3, 3, 2, 1, true};
  std::mt19937_64 rng(7);
  auto pd = Conv2dParams<double>::make(g);
  fill_normal(pd.weight, rng);
  fill_normal(*pd.bias, rng);
  Tensor64 xd(Shape{2, 2, 3, 7, 6});
  fill_normal(xd, rng);
  Conv2dParams<float> pf{g, tensor_cast<float>(pd.weight), tensor_cast<float>(*pd.bias)};
  const Tensor64 y = tensor_cast<double>(conv2d_forward(tensor_cast<float>(xd), pf));
  EXPECT_LE(max_abs_diff(y, naive_conv(xd, pd)), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(
    Geometries, ConvOracle,
    ::testing::Values(ConvCase{{3, 4, 3, 3, 1, 1, false}, Shape{2, 2, 3, 5, 6}},
                      ConvCase{{2, 3, 3, 3, 2, 1, true}, Shape{1, 3, 2, 7, 7}},
                      ConvCase{{1, 2, 7, 7, 2, 3, false}, Shape{2, 1, 1, 9, 8}},
                      ConvCase{{4, 6, 1, 1, 2, 0, false}, Shape{1, 2, 4, 5, 5}},
                      ConvCase{{2, 2, 3, 2, 1, 0, true}, Shape{1, 1, 2, 4, 4}}));

TEST(Conv2d, Errors) {
  auto p = Conv2dParams<float>::make(Conv2dGeometry{1, 1, 7, 7, 1, 0, false});
  EXPECT_THROW(conv2d_forward(Tensor32(Shape{1, 1, 1, 3, 3}), p), ShapeError);
  auto q = Conv2dParams<float>::make(Conv2dGeometry{2, 1, 3, 3, 1, 1, false});
  EXPECT_THROW(conv2d_forward(Tensor32(Shape{1, 1, 3, 5, 5}), q), ShapeError);
  EXPECT_THROW(Conv2dParams<float>::make(Conv2dGeometry{1, 1, 3, 3, 0, 1, false}), ConfigError);
}

// Per-channel zero mean and unit (biased) variance over N, T, H, W.
Tensor64 standardized(const Shape& s, std::mt19937_64& rng) {
  Tensor64 x(s);
  fill_normal(x, rng, 2.0, 3.0);
  for (std::int64_t c = 0; c < s.c; ++c) {
    double sum = 0.0, sq = 0.0, m = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t t = 0; t < s.t; ++t)
        for (std::int64_t h = 0; h < s.h; ++h)
          for (std::int64_t w = 0; w < s.w; ++w) {
            sum += x.at(n, t, c, h, w);
            m += 1.0;
          }
    const double mu = sum / m;
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t t = 0; t < s.t; ++t)
        for (std::int64_t h = 0; h < s.h; ++h)
          for (std::int64_t w = 0; w < s.w; ++w) {
            const double d = x.at(n, t, c, h, w) - mu;
            sq += d * d;
          }
    const double sd = std::sqrt(sq / m);
    for (std::int64_t n = 0; n < s.n; ++n)
      for (std::int64_t t = 0; t < s.t; ++t)
        for (std::int64_t h = 0; h < s.h; ++h)
          for (std::int64_t w = 0; w < s.w; ++w) x.at(n, t, c, h, w) = (x.at(n, t, c, h, w) - mu) / sd;
  }
  return x;
}

TEST(BatchNorm, NormalizedInputIsFixedPoint) {
  std::mt19937_64 rng(3);
  const Tensor64 x = standardized(Shape{4, 2, 3, 5, 5}, rng);
  auto p = BatchNormParams<double>::make(3);
  EXPECT_TRUE(approx_equal(batchnorm_forward(x, p, Mode::kTrain), x, 1e-4));
}

TEST(BatchNorm, RunningStatsUseUnbiasedVariance) {
  // One channel, values {1, 3}: mean 2, unbiased variance 2.
  Tensor64 x(Shape{2, 1, 1, 1, 1}, {1.0, 3.0});
  auto p = BatchNormParams<double>::make(1);
  (void)batchnorm_forward(x, p, Mode::kTrain);
  EXPECT_DOUBLE_EQ(p.running_mean[0], 0.1 * 2.0);
  EXPECT_DOUBLE_EQ(p.running_var[0], 0.9 * 1.0 + 0.1 * 2.0);
}

TEST(BatchNorm, EvalUsesRunningStats) {
  auto p = BatchNormParams<double>::make(1);
  p.running_mean[0] = 1.0;
  p.running_var[0] = 4.0;
  p.gamma[0] = 2.0;
  p.beta[0] = 0.5;
  const Tensor64 x(Shape{1, 1, 1, 1, 2}, {1.0, 5.0});
  const Tensor64 y = batchnorm_forward(x, p, Mode::kEval);
  const double sd = std::sqrt(4.0 + p.eps);
  EXPECT_NEAR(y[0], 0.5, 1e-12);
  EXPECT_NEAR(y[1], 2.0 * 4.0 / sd + 0.5, 1e-12);
  EXPECT_EQ(p.running_mean[0], 1.0);
}

TEST(BatchNorm, FrozenIgnoresBatchAndKeepsStats) {
  std::mt19937_64 rng(4);
  Tensor64 x(Shape{3, 2, 2, 3, 3});
  fill_normal(x, rng, 1.0, 2.0);
  auto frozen = BatchNormParams<double>::make(2);
  frozen.frozen = true;
  frozen.running_mean[1] = 0.5;
  auto eval = frozen;
  const Tensor64 a = batchnorm_forward(x, frozen, Mode::kTrain);
  const Tensor64 b = batchnorm_forward(x, eval, Mode::kEval);
  EXPECT_TRUE(identical(a, b));
  EXPECT_EQ(frozen.running_mean[1], 0.5);
  EXPECT_EQ(frozen.running_var[0], 1.0);
}

TEST(BatchNorm, ChannelMismatchThrows) {
  auto p = BatchNormParams<float>::make(3);
  EXPECT_THROW(batchnorm_forward(Tensor32(Shape{1, 1, 2, 1, 1}), p, Mode::kTrain), ShapeError);
}

TEST(Relu, Values) {
  const Tensor32 x(Shape{1, 1, 3, 1, 1}, {-1.0f, 0.0f, 2.0f});
  const Tensor32 y = relu_forward(x);
  EXPECT_EQ(std::vector<float>(y.values().begin(), y.values().end()), (std::vector<float>{0, 0, 2}));
  const Tensor32 g(Shape{1, 1, 3, 1, 1}, {5.0f, 6.0f, 7.0f});
  const Tensor32 gx = relu_backward(y, g);
  EXPECT_EQ(std::vector<float>(gx.values().begin(), gx.values().end()), (std::vector<float>{0, 0, 7}));
}

TEST(MaxPool, ForwardAndRouting) {
  Tensor32 x(Shape{1, 1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
  const auto r = maxpool_forward(x);
  ASSERT_EQ(r.y.shape(), (Shape{1, 1, 1, 2, 2}));
  // Windows (pad 1) end at rows/cols 1 and 3.
  EXPECT_EQ(r.y.at(0, 0, 0, 0, 0), 5.0f);
  EXPECT_EQ(r.y.at(0, 0, 0, 1, 1), 15.0f);
  Tensor32 g(r.y.shape());
  g.fill(1.0f);
  const Tensor32 gx = maxpool_backward(x.shape(), r.argmax, g);
  EXPECT_EQ(gx[5], 1.0f);
  EXPECT_EQ(gx[15], 1.0f);
  EXPECT_EQ(gx[0], 0.0f);
  EXPECT_FLOAT_EQ(l2_norm(gx) * l2_norm(gx), 4.0f);
}

TEST(GlobalAvgPool, Constant) {
  Tensor32 x(Shape{2, 3, 4, 5, 5});
  x.fill(2.5f);
  const Tensor32 y = global_avg_pool(x);
  ASSERT_EQ(y.shape(), (Shape{2, 1, 4, 1, 1}));
  for (float v : y.values()) EXPECT_FLOAT_EQ(v, 2.5f);
  const Tensor32 gx = global_avg_pool_backward(x.shape(), y);
  EXPECT_FLOAT_EQ(gx[0], 2.5f / 75.0f);
}

TEST(Dropout, EvalAndZeroRateAreIdentity) {
  std::mt19937_64 rng(5);
  Tensor32 x(Shape{4, 1, 8, 1, 1});
  fill_normal(x, rng);
  Tensor32 mask;
  EXPECT_TRUE(identical(dropout_forward(x, 0.5, Mode::kEval, rng, &mask), x));
  EXPECT_TRUE(identical(dropout_forward(x, 0.0, Mode::kTrain, rng, &mask), x));
  EXPECT_THROW(dropout_forward(x, 1.0, Mode::kTrain, rng, &mask), ConfigError);
}

TEST(Dropout, InvertedScaling) {
  std::mt19937_64 rng(6);
  Tensor64 x(Shape{1, 1, 20000, 1, 1});
  x.fill(1.0);
  Tensor64 mask;
  const Tensor64 y = dropout_forward(x, 0.25, Mode::kTrain, rng, &mask);
  double sum = 0.0;
  for (double v : y.values()) {
    ASSERT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12);
    sum += v;
  }
  EXPECT_NEAR(sum / 20000.0, 1.0, 0.03);
  EXPECT_TRUE(identical(dropout_backward(mask, x), y));
}

TEST(Linear, ForwardBackward) {
  auto p = LinearParams<double>::make(3, 2);
  p.weight = Tensor64(Shape{2, 1, 3, 1, 1}, {1, 2, 3, 4, 5, 6});
  p.bias = Tensor64(Shape{1, 1, 2, 1, 1}, {0.5, -0.5});
  const Tensor64 x(Shape{1, 1, 3, 1, 1}, {1, 0, -1});
  const Tensor64 y = linear_forward(x, p);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], -2.0 + 0.5);
  EXPECT_DOUBLE_EQ(y[1], -2.0 - 0.5);
  const Tensor64 gy(y.shape(), {1.0, 2.0});
  const auto g = linear_backward(x, p, gy);
  EXPECT_EQ(std::vector<double>(g.grad_x.values().begin(), g.grad_x.values().end()),
            (std::vector<double>{9, 12, 15}));
  EXPECT_EQ(std::vector<double>(g.grad_w.values().begin(), g.grad_w.values().end()),
            (std::vector<double>{1, 0, -1, 2, 0, -2}));
  EXPECT_EQ(std::vector<double>(g.grad_b.values().begin(), g.grad_b.values().end()),
            (std::vector<double>{1, 2}));
  EXPECT_THROW(linear_forward(Tensor64(Shape{1, 1, 4, 1, 1}), p), ShapeError);
}

TEST(Elementwise, AddShapes) {
  const Tensor32 a(Shape{1, 1, 2, 1, 1}, {1, 2});
  EXPECT_EQ(add(a, a)[1], 4.0f);
  Tensor32 acc = a;
  EXPECT_THROW(add_inplace(acc, Tensor32(Shape{1, 1, 3, 1, 1})), ShapeError);
}

TEST(Conv2dLayer, GradientsAccumulateUntilZeroed) {
  std::mt19937_64 rng(8);
  Conv2dLayer<double> layer(Conv2dGeometry{2, 2, 3, 3, 1, 1, false});
  layer.init(rng);
  Tensor64 x(Shape{1, 1, 2, 4, 4});
  fill_normal(x, rng);
  Tensor64 g(Shape{1, 1, 2, 4, 4});
  fill_normal(g, rng);
  (void)layer.forward(x);
  (void)layer.backward(g);
  const Tensor64 once = layer.grad_w();
  (void)layer.forward(x);
  (void)layer.backward(g);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(layer.grad_w()[i], 2.0 * once[i], 1e-12);
  layer.zero_grad();
  EXPECT_EQ(l2_norm(layer.grad_w()), 0.0);
}

}  // namespace
}  // namespace vshuffle
