#include <gtest/gtest.h>

#include <cmath>

#include "diffmatte/metrics.hpp"
#include "metric_oracle.hpp"

using namespace diffmatte;

namespace {

Tensor<double> tensor_of(const std::vector<double>& v, int h, int w) {
  Tensor<double> t(1, 1, h, w);
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

void expect_rel(double got, double want, double tol, const std::string& what) {
  EXPECT_LE(std::abs(got - want), tol * std::max(std::abs(want), 1e-12)) << what << ": " << got << " vs " << want;
}

}  // namespace

TEST(Metrics, IdenticalMattesScoreZero) {
  Rng rng(1);
  Tensor<double> a(2, 1, 16, 16), tri(2, 1, 16, 16, 0.5);
  fill_uniform(a, rng, 0.0, 1.0);
  const auto r = evaluate(a, a, tri);
  EXPECT_EQ(r.sad, 0.0);
  EXPECT_EQ(r.mse, 0.0);
  EXPECT_EQ(r.grad, 0.0);
  EXPECT_EQ(r.conn, 0.0);
}

TEST(Metrics, SadAndMseExamples) {
  Tensor<double> p(1, 1, 10, 10, 0.3), g(1, 1, 10, 10, 0.1), tri(1, 1, 10, 10, 0.5);
  EXPECT_NEAR(sad(p, g, tri), 100 * 0.2 / 1000.0, 1e-15);
  EXPECT_NEAR(mse(p, g, tri), 0.04 * 1000.0, 1e-9);
  tri.fill(1.0);
  tri(0, 0, 0, 0) = 0.5;
  EXPECT_NEAR(sad(p, g, tri), 0.2 / 1000.0, 1e-15);
  tri.zero();
  EXPECT_EQ(sad(p, g, tri), 0.0);
  EXPECT_THROW(mse(p, g, tri), DomainError);
  EXPECT_THROW(sad(p, Tensor<double>(1, 1, 5, 5), tri), DomainError);
}

TEST(Metrics, ScalingProperties) {
  Rng rng(2);
  Tensor<double> g(1, 1, 16, 16), d(1, 1, 16, 16), tri(1, 1, 16, 16, 0.5);
  fill_uniform(g, rng, 0.25, 0.75);
  fill_uniform(d, rng, -0.1, 0.1);
  Tensor<double> p1 = g, p2 = g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    p1[i] += d[i];
    p2[i] += 2 * d[i];
  }
  EXPECT_NEAR(sad(p2, g, tri), 2 * sad(p1, g, tri), 1e-12);
  EXPECT_NEAR(mse(p2, g, tri), 4 * mse(p1, g, tri), 1e-9);
  // a constant offset has no gradient
  Tensor<double> shifted = g;
  for (auto& v : shifted.values()) v += 0.1;
  EXPECT_NEAR(grad_metric(shifted, g, tri), 0.0, 1e-15);
}

TEST(Metrics, GaussianDerivativeKernel) {
  int r = 0;
  const auto k = gaussian_derivative_kernel(1.4, &r);
  EXPECT_EQ(r, 5);
  ASSERT_EQ(k.size(), 121u);
  double sq = 0.0;
  for (double v : k) sq += v * v;
  EXPECT_NEAR(sq, 1.0, 1e-12);  // product of two unit vectors
  for (int y = 0; y < 11; ++y) {
    EXPECT_EQ(k[y * 11 + 5], 0.0);
    for (int x = 0; x < 5; ++x) EXPECT_NEAR(k[y * 11 + x], -k[y * 11 + 10 - x], 1e-15);
  }
  EXPECT_THROW(gaussian_derivative_kernel(0.0, nullptr), DomainError);
}

TEST(Metrics, GradientMagnitudeOfRampIsFlatInInterior) {
  std::vector<double> ramp(32 * 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) ramp[y * 32 + x] = 0.01 * x;
  const auto m = gradient_magnitude(ramp, 32, 32, 1.4);
  for (int x = 8; x < 24; ++x) EXPECT_NEAR(m[16 * 32 + x], m[16 * 32 + 16], 1e-12);
  EXPECT_GT(m[16 * 32 + 16], 0.0);
}

TEST(Metrics, LargestComponent) {
  const std::vector<bool> m{1, 1, 0, 1,  //
                            1, 0, 0, 1,  //
                            0, 0, 1, 1,  //
                            1, 1, 0, 0};
  // sizes 3 (top left), 4 (right), 2 (bottom)
  const std::vector<bool> right{0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 1, 0, 0, 0, 0};
  EXPECT_EQ(largest_component(m, 4, 4), right);
  // equal sizes: the component reached first in raster order
  EXPECT_EQ(largest_component({1, 1, 0, 0, 0, 0, 1, 1, 0}, 3, 3), (std::vector<bool>{1, 1, 0, 0, 0, 0, 0, 0, 0}));
  EXPECT_EQ(largest_component(std::vector<bool>(9, false), 3, 3), std::vector<bool>(9, false));
  // diagonal neighbours are not connected
  EXPECT_EQ(largest_component({1, 0, 0, 1}, 2, 2), (std::vector<bool>{1, 0, 0, 0}));
}

TEST(Metrics, ConnHandComputedCase) {
  // 1x4 strip, all unknown. gt = 1 everywhere; pred has a hole at x = 2 that
  // disconnects x = 3 from the largest component for every threshold.
  Tensor<double> p(1, 1, 1, 4), g(1, 1, 1, 4, 1.0), tri(1, 1, 1, 4, 0.5);
  p[0] = 1.0;
  p[1] = 1.0;
  p[2] = 0.0;
  p[3] = 0.8;
  // levels: x0,x1 -> 1 (always connected); x2 -> 0 (fails at 0.1); x3 -> 0 (never in the largest)
  // phi_p = {1, 1, 1, 1 - 0.8}, phi_g = {1, 1, 0, 0}
  EXPECT_NEAR(conn_metric(p, g, tri), (0.0 + 0.0 + 1.0 + 0.2) / 1000.0, 1e-15);
  EXPECT_THROW(conn_metric(p, g, tri, 0.0), DomainError);
}

TEST(Metrics, MatchBruteForceOracle) {
  std::mt19937_64 rng(2024);
  for (int n = 0; n < 50; ++n) {
    const auto c = oracle::random_instance(rng, 16, 16, n);
    const auto p = tensor_of(c.pred, 16, 16), g = tensor_of(c.gt, 16, 16), t = tensor_of(c.trimap, 16, 16);
    const std::string tag = "instance " + std::to_string(n);
    expect_rel(sad(p, g, t), oracle::sad(c), 1e-9, tag + " sad");
    expect_rel(mse(p, g, t), oracle::mse(c), 1e-9, tag + " mse");
    expect_rel(grad_metric(p, g, t), oracle::grad(c), 1e-9, tag + " grad");
    expect_rel(conn_metric(p, g, t), oracle::conn(c), 1e-9, tag + " conn");
  }
}

TEST(Metrics, FloatAndDoubleAgree) {
  std::mt19937_64 rng(7);
  const auto c = oracle::random_instance(rng, 16, 16, 0);
  const auto p = tensor_of(c.pred, 16, 16), g = tensor_of(c.gt, 16, 16), t = tensor_of(c.trimap, 16, 16);
  const auto rd = evaluate(p, g, t);
  const auto rf = evaluate(p.cast<float>(), g.cast<float>(), t.cast<float>());
  EXPECT_NEAR(rf.sad, rd.sad, 1e-6);
  EXPECT_NEAR(rf.mse, rd.mse, 1e-3);
  EXPECT_NEAR(rf.grad, rd.grad, 1e-6);
}

TEST(Metrics, SumsOverBatch) {
  std::mt19937_64 rng(8);
  const auto a = oracle::random_instance(rng, 16, 16, 2);
  const auto b = oracle::random_instance(rng, 16, 16, 0);
  Tensor<double> p(2, 1, 16, 16), g(2, 1, 16, 16), t(2, 1, 16, 16);
  std::copy(a.pred.begin(), a.pred.end(), p.plane(0, 0));
  std::copy(b.pred.begin(), b.pred.end(), p.plane(1, 0));
  std::copy(a.gt.begin(), a.gt.end(), g.plane(0, 0));
  std::copy(b.gt.begin(), b.gt.end(), g.plane(1, 0));
  std::copy(a.trimap.begin(), a.trimap.end(), t.plane(0, 0));
  std::copy(b.trimap.begin(), b.trimap.end(), t.plane(1, 0));
  EXPECT_NEAR(sad(p, g, t), oracle::sad(a) + oracle::sad(b), 1e-12);
  EXPECT_NEAR(grad_metric(p, g, t), oracle::grad(a) + oracle::grad(b), 1e-12);
  EXPECT_NEAR(conn_metric(p, g, t), oracle::conn(a) + oracle::conn(b), 1e-12);
}
