#include <gtest/gtest.h>

#include <cmath>

#include "diffmatte/grad_check.hpp"
#include "diffmatte/layers.hpp"

using namespace diffmatte;

namespace {

// Direct sliding-window cross-correlation with "same" zero padding.
Tensor<double> brute_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride) {
  const int k = w.h();
  const int pad = k / 2;
  const int oh = (x.h() + stride - 1) / stride;
  const int ow = (x.w() + stride - 1) / stride;
  Tensor<double> y(x.n(), w.n(), oh, ow);
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < w.n(); ++o)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b(0, o, 0, 0);
          for (int i = 0; i < x.c(); ++i)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = oy * stride + ky - pad;
                const int sx = ox * stride + kx - pad;
                if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
                acc += w(o, i, ky, kx) * x(n, i, sy, sx);
              }
          y(n, o, oy, ox) = acc;
        }
  return y;
}

Tensor<double> random_tensor(Shape s, Rng& rng) {
  Tensor<double> t(s);
  fill_normal(t, rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST(Conv2d, MatchesBruteForce) {
  Rng rng(1);
  for (int stride : {1, 2}) {
    for (int k : {1, 3}) {
      Conv2d<double> conv(3, 4, k, stride);
      conv.init(rng);
      const auto x = random_tensor({2, 3, 7, 6}, rng);
      const auto y = conv.forward(x);
      const auto ref = brute_conv(x, conv.weight, conv.bias, stride);
      ASSERT_EQ(y.shape(), ref.shape());
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    }
  }
}

TEST(Conv2d, SingleChannelFloatWithinTolerance) {
  Rng rng(2);
  Conv2d<float> conv(1, 1, 3, 1);
  conv.init(rng);
  Tensor<float> x(1, 1, 4, 4);
  fill_normal(x, rng);
  const auto y = conv.forward(x);
  const auto ref = brute_conv(x.cast<double>(), conv.weight.cast<double>(), conv.bias.cast<double>(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-6);
}

TEST(Conv2d, IdentityKernel) {
  Conv2d<float> conv(1, 1, 3, 1);
  conv.weight.zero();
  conv.bias.zero();
  conv.weight(0, 0, 1, 1) = 1.0f;
  Rng rng(3);
  Tensor<float> x(1, 1, 5, 5);
  fill_normal(x, rng);
  EXPECT_EQ(conv.forward(x), x);
}

TEST(Conv2d, OnesKernelOnConstantInterior) {
  Conv2d<float> conv(1, 1, 3, 1);
  conv.weight.fill(1.0f);
  conv.bias.zero();
  const auto y = conv.forward(Tensor<float>(1, 1, 5, 5, 1.0f));
  for (int yy = 1; yy < 4; ++yy)
    for (int xx = 1; xx < 4; ++xx) EXPECT_EQ(y(0, 0, yy, xx), 9.0f);
  EXPECT_EQ(y(0, 0, 0, 0), 4.0f);
}

TEST(Conv2d, StrideTwoHalvesWithCeil) {
  Conv2d<float> conv(2, 3, 3, 2);
  EXPECT_EQ(conv.forward(Tensor<float>(1, 2, 8, 8)).shape(), (Shape{1, 3, 4, 4}));
  EXPECT_EQ(conv.forward(Tensor<float>(1, 2, 7, 5)).shape(), (Shape{1, 3, 4, 3}));
}

TEST(Conv2d, RejectsChannelMismatch) {
  Conv2d<float> conv(2, 3, 3, 1);
  EXPECT_THROW(conv.forward(Tensor<float>(1, 3, 4, 4)), DomainError);
}

TEST(Conv2d, InitBoundedByFanIn) {
  Rng rng(4);
  Conv2d<float> conv(4, 8, 3, 1);
  conv.init(rng);
  const double bound = 1.0 / std::sqrt(4.0 * 9.0);
  for (float v : conv.weight.values()) EXPECT_LE(std::abs(v), bound);
  for (float v : conv.bias.values()) EXPECT_LE(std::abs(v), bound);
}

TEST(Conv2d, GradCheck) {
  Rng rng(5);
  for (int stride : {1, 2}) {
    for (int k : {1, 3}) {
      Conv2d<double> conv(2, 3, k, stride);
      conv.init(rng);
      auto x = random_tensor({2, 2, 5, 6}, rng);
      const auto probe = random_tensor(conv.forward(x).shape(), rng);
      conv.weight_grad.zero();
      conv.bias_grad.zero();
      const auto dx = conv.backward(x, probe);
      std::vector<GradTarget> targets{{"weight", &conv.weight, &conv.weight_grad},
                                      {"bias", &conv.bias, &conv.bias_grad},
                                      {"input", &x, &dx}};
      const auto report = grad_check(targets, [&] { return dot(conv.forward(x), probe); });
      EXPECT_LT(report.max_rel_error, 1e-5) << report.worst;
    }
  }
}

TEST(TimeEmbedding, ZeroWeightsGiveZero) {
  TimeEmbedding<float> te(5, 0);
  te.weight.zero();
  te.bias.zero();
  for (float v : te.embed(0.37)) EXPECT_EQ(v, 0.0f);
}

TEST(TimeEmbedding, AffineInTime) {
  Rng rng(6);
  TimeEmbedding<double> te(6, 0);
  te.init(rng);
  const auto e0 = te.embed(0.0);
  const auto e1 = te.embed(1.0);
  const auto eh = te.embed(0.5);
  for (std::size_t c = 0; c < eh.size(); ++c) EXPECT_NEAR(eh[c], 0.5 * (e0[c] + e1[c]), 1e-15);
}

TEST(TimeEmbedding, GradCheck) {
  Rng rng(7);
  for (int freq : {0, 2}) {
    TimeEmbedding<double> te(3, freq);
    te.init(rng);
    const auto base = random_tensor({2, 3, 3, 3}, rng);
    const auto probe = random_tensor(base.shape(), rng);
    const std::vector<double> t{0.2, 0.9};
    te.weight_grad.zero();
    te.bias_grad.zero();
    te.backward(probe, t);
    std::vector<GradTarget> targets{{"weight", &te.weight, &te.weight_grad}, {"bias", &te.bias, &te.bias_grad}};
    const auto report = grad_check(targets, [&] {
      auto x = base;
      te.add_to(x, t);
      return dot(x, probe);
    });
    EXPECT_LT(report.max_rel_error, 1e-6) << report.worst;
  }
}

TEST(ResBlock, GradCheckIncludingTimePath) {
  Rng rng(8);
  for (int stride : {1, 2}) {
    ResBlock<double> block(3, 4, stride, 0);
    block.init(rng);
    auto x = random_tensor({2, 3, 6, 6}, rng);
    const std::vector<double> t{0.3, 0.7};
    const auto probe = random_tensor(block.forward(x, t, nullptr).shape(), rng);
    BlockTape<double> tape;
    block.forward(x, t, &tape);
    std::vector<GradTarget> targets;
    block.visit("block", [&](const std::string& name, Tensor<double>& v, Tensor<double>& g) {
      g.zero();
      targets.push_back({name, &v, &g});
    });
    const auto dx = block.backward(tape, t, probe);
    targets.push_back({"input", &x, &dx});
    const auto report = grad_check(targets, [&] { return dot(block.forward(x, t, nullptr), probe); });
    EXPECT_LT(report.max_rel_error, 1e-5) << report.worst;

    double time_grad = 0.0;
    for (double g : block.time.weight_grad.values()) time_grad += std::abs(g);
    EXPECT_GT(time_grad, 0.0);
  }
}

TEST(Activations, SiluAndLogisticGradients) {
  Rng rng(9);
  auto x = random_tensor({1, 2, 3, 3}, rng);
  const auto probe = random_tensor(x.shape(), rng);
  const auto dsilu = silu_backward(x, probe);
  std::vector<GradTarget> t1{{"silu", &x, &dsilu}};
  EXPECT_LT(grad_check(t1, [&] { return dot(silu(x), probe); }).max_rel_error, 1e-7);

  const auto dlog = logistic_backward(logistic(x), probe);
  std::vector<GradTarget> t2{{"logistic", &x, &dlog}};
  EXPECT_LT(grad_check(t2, [&] { return dot(logistic(x), probe); }).max_rel_error, 1e-7);
}

TEST(Activations, LogisticStaysInUnitInterval) {
  Tensor<float> x(1, 1, 1, 4);
  x[0] = -1e4f;
  x[1] = 1e4f;
  x[2] = 0.0f;
  x[3] = -50.0f;
  const auto y = logistic(x);
  for (float v : y.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_EQ(y[2], 0.5f);
}

TEST(Upsample, ShapeAndAdjoint) {
  Rng rng(10);
  const auto x = random_tensor({1, 2, 3, 4}, rng);
  const auto up = upsample2x(x);
  EXPECT_EQ(up.shape(), (Shape{1, 2, 6, 8}));
  EXPECT_EQ(up(0, 1, 5, 7), x(0, 1, 2, 3));
  const auto dy = random_tensor(up.shape(), rng);
  // <up(x), dy> == <x, up^T(dy)>
  EXPECT_NEAR(dot(up, dy), dot(x, upsample2x_backward(dy)), 1e-12);
}

TEST(Upsample, RoundTripOfStrideTwoExtents) {
  Conv2d<float> down(1, 1, 3, 2);
  for (int e : {8, 16, 32}) {
    const auto y = upsample2x(down.forward(Tensor<float>(1, 1, e, e)));
    EXPECT_EQ(y.h(), e);
    EXPECT_EQ(y.w(), e);
  }
}
