#include <gtest/gtest.h>

#include <cmath>

#include "diffmatte/grad_check.hpp"
#include "diffmatte/losses.hpp"
#include "diffmatte/model.hpp"
#include "diffmatte/training.hpp"

using namespace diffmatte;

namespace {

ModelConfig tiny_config(int n_d = 4, int stride = 16) {
  ModelConfig cfg;
  cfg.net.n_d = n_d;
  cfg.net.n_f = 6;
  cfg.net.feature_stride = stride;
  return cfg;
}

template <typename T>
struct Inputs {
  Tensor<T> cond;
  Tensor<T> x;
  std::vector<double> t;
};

template <typename T>
Inputs<T> random_inputs(int n, int size, Rng& rng) {
  Inputs<T> in{Tensor<T>(n, 4, size, size), Tensor<T>(n, 1, size, size), {}};
  fill_uniform(in.cond, rng, 0.0, 1.0);
  fill_normal(in.x, rng);
  for (int i = 0; i < n; ++i) in.t.push_back(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  return in;
}

template <typename T>
Tensor<T> run(const MattingModelT<T>& m, const Inputs<T>& in) {
  const auto f = m.encode(in.cond);
  return m.decode(concat_channels(in.x, in.cond), in.t, f);
}

}  // namespace

TEST(DecoderConfig, ChannelLists) {
  DecoderConfig c;
  c.n_d = 8;
  c.n_f = 16;
  EXPECT_EQ(c.down_channels(), (std::vector<int>{8, 16, 32}));
  EXPECT_EQ(c.resolved_up_channels(), (std::vector<int>{64, 32, 16, 8}));
  EXPECT_EQ(c.encoder_channels(), (std::vector<int>{8, 16, 32, 16}));
  c.feature_stride = 32;
  EXPECT_EQ(c.down_channels(), (std::vector<int>{8, 16, 32, 32}));
  EXPECT_EQ(c.resolved_up_channels(), (std::vector<int>{64, 64, 32, 16, 8}));
  EXPECT_EQ(c.encoder_channels().size(), 5u);
}

TEST(DecoderConfig, Validation) {
  DecoderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.feature_stride = 8;
  EXPECT_THROW(c.validate(), DomainError);
  c = DecoderConfig{};
  c.n_d = 0;
  EXPECT_THROW(c.validate(), DomainError);
  c = DecoderConfig{};
  c.up_channels = {1, 2};
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(Model, OutputShapeAndRange) {
  Rng rng(1);
  for (int stride : {16, 32}) {
    MattingModel m(tiny_config(4, stride), rng);
    const auto in = random_inputs<float>(2, 32, rng);
    const auto y = run(m, in);
    EXPECT_EQ(y.shape(), (Shape{2, 1, 32, 32}));
    for (float v : y.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    EXPECT_EQ(m.encode(in.cond).shape(), (Shape{2, 6, 32 / stride, 32 / stride}));
  }
}

TEST(Model, DeskModelParameterCount) {
  Rng rng(0);
  MattingModel m(desk_model_config(), rng);
  EXPECT_EQ(m.parameter_count(), 205169u);
}

TEST(Model, ParameterCountGrowsWithWidth) {
  Rng rng(0);
  std::size_t prev = 0;
  for (int nd : {4, 8, 16}) {
    MattingModel m(tiny_config(nd), rng);
    EXPECT_GT(m.parameter_count(), prev);
    prev = m.parameter_count();
  }
}

TEST(Model, ZeroHeadGivesOneHalf) {
  Rng rng(2);
  MattingModel m(tiny_config(), rng);
  m.decoder.head.weight.zero();
  m.decoder.head.bias.zero();
  const auto y = run(m, random_inputs<float>(1, 16, rng));
  for (float v : y.values()) EXPECT_EQ(v, 0.5f);
}

TEST(Model, OutputDependsOnTime) {
  Rng rng(3);
  MattingModel m(tiny_config(), rng);
  auto in = random_inputs<float>(1, 16, rng);
  in.t = {0.1};
  const auto a = run(m, in);
  in.t = {0.9};
  const auto b = run(m, in);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - b[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(Model, RejectsBadShapes) {
  Rng rng(4);
  MattingModel m(tiny_config(), rng);
  EXPECT_THROW(m.encode(Tensor<float>(1, 4, 24, 24)), DomainError);
  EXPECT_THROW(m.encode(Tensor<float>(1, 3, 16, 16)), DomainError);
  const auto f = m.encode(Tensor<float>(1, 4, 16, 16));
  const std::vector<double> t{0.5};
  EXPECT_THROW(m.decode(Tensor<float>(1, 4, 16, 16), t, f), DomainError);
  EXPECT_THROW(m.decode(Tensor<float>(1, 5, 16, 16), std::vector<double>{1.5}, f), DomainError);
  EXPECT_THROW(m.decode(Tensor<float>(1, 5, 16, 16), std::vector<double>{0.1, 0.2}, f), DomainError);
  EXPECT_THROW(m.decode(Tensor<float>(1, 5, 32, 32), t, f), DomainError);
}

TEST(Model, CountersTrackCalls) {
  Rng rng(5);
  MattingModel m(tiny_config(), rng);
  const auto in = random_inputs<float>(1, 16, rng);
  run(m, in);
  run(m, in);
  EXPECT_EQ(m.encoder_calls(), 2);
  EXPECT_EQ(m.decoder_calls(), 2);
  m.reset_counters();
  EXPECT_EQ(m.encoder_calls(), 0);
}

TEST(Model, CastRoundTripPreservesParameters) {
  Rng rng(6);
  MattingModel m(tiny_config(), rng);
  const auto back = m.cast<double>().cast<float>();
  std::vector<Tensor<float>> a, b;
  m.visit([&](const std::string&, const Tensor<float>& v, const Tensor<float>&) { a.push_back(v); });
  back.visit([&](const std::string&, const Tensor<float>& v, const Tensor<float>&) { b.push_back(v); });
  EXPECT_EQ(a, b);
}

TEST(Model, EndToEndLossGradCheck) {
  Rng rng(7);
  auto m = MattingModel(tiny_config(4), rng).cast<double>();
  auto in = random_inputs<double>(2, 16, rng);
  Tensor<double> gt(2, 1, 16, 16);
  fill_uniform(gt, rng, 0.0, 1.0);
  Tensor<double> trimap(2, 1, 16, 16);
  for (auto& v : trimap.values()) v = std::uniform_int_distribution<int>(0, 2)(rng) * 0.5;

  auto loss = [&] {
    const auto f = m.encode(in.cond);
    return matting_loss(m.decode(concat_channels(in.x, in.cond), in.t, f), gt, trimap).total;
  };

  m.zero_grad();
  EncoderTape<double> etape;
  DecoderTape<double> dtape;
  const auto f = m.encode(in.cond, &etape);
  const auto pred = m.decode(concat_channels(in.x, in.cond), in.t, f, &dtape);
  Tensor<double> dpred(pred.shape());
  matting_loss(pred, gt, trimap, LossWeights{}, &dpred);
  const auto g = m.decoder.backward(dtape, dpred);
  const auto dcond_enc = m.encoder.backward(etape, g.features);

  auto targets = parameter_targets(m);
  auto [dx, dcond_dec] = split_channels(g.input, 1);
  auto dcond = dcond_enc;
  dcond += dcond_dec;
  targets.push_back({"input.x", &in.x, &dx});
  targets.push_back({"input.cond", &in.cond, &dcond});

  GradCheckOptions opt;
  opt.max_entries_per_tensor = 24;
  const auto report = grad_check(targets, loss, opt);
  EXPECT_GT(report.checked, 500u);
  EXPECT_LT(report.max_rel_error, 1e-4) << report.worst;
}
