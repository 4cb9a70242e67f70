#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "diffmatte/checkpoint.hpp"
#include "diffmatte/training.hpp"

using namespace diffmatte;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.net.n_d = 4;
  cfg.net.n_f = 4;
  return cfg;
}

TrainExample example(std::uint64_t seed, int size = 16) {
  Rng rng(seed);
  auto s = random_crop_flip(gen_sample(rng, 32), size, rng);
  return {s.alpha, s.image, s.trimap};
}

std::vector<Tensor<float>> params_of(const MattingModel& m) {
  std::vector<Tensor<float>> out;
  m.visit([&](const std::string&, const Tensor<float>& v, const Tensor<float>&) { out.push_back(v); });
  return out;
}

}  // namespace

TEST(SampleTime, UniformOnUnitInterval) {
  Rng rng(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double t = sample_time(rng);
    ASSERT_GE(t, 0.0);
    ASSERT_LE(t, 1.0);
    sum += t;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.01);
  Rng a(3), b(3);
  EXPECT_EQ(sample_time(a), sample_time(b));
}

TEST(Uti, TimesStayInRangeAndCoverTheInterval) {
  Rng rng(2);
  MattingModel m(tiny_config(), rng);
  const auto ex = example(1);
  std::vector<int> bins(20, 0);
  // 1000 draws per call: one decoder pass per batch
  Tensor<float> batch_alpha(1000, 1, 16, 16);
  std::vector<Tensor<float>> images(1000, ex.image), trimaps(1000, ex.trimap);
  const Conditioning cb{stack_batch<float>(images), stack_batch<float>(trimaps)};
  for (int rep = 0; rep < 100; ++rep) {
    const auto draw = uti_sample(m, batch_alpha, cb, rng);
    for (std::size_t i = 0; i < draw.t.size(); ++i) {
      ASSERT_GE(draw.t[i], 0.0);
      ASSERT_LE(draw.t_prime[i], 1.0);
      ASSERT_GE(draw.t_prime[i], draw.t[i]);
      bins[std::min(19, static_cast<int>(draw.t_prime[i] * 20))]++;
    }
  }
  for (int b = 0; b < 20; ++b) EXPECT_GT(bins[b], 0) << "bin " << b;
}

TEST(Uti, FrozenPassLeavesGradientsAndParametersAlone) {
  Rng rng(3);
  MattingModel m(tiny_config(), rng);
  m.zero_grad();
  const auto before = params_of(m);
  const auto ex = example(2);
  const Conditioning c{ex.image, ex.trimap};
  const auto features = m.encode(c.stacked());
  m.reset_counters();
  const auto draw = uti_sample(m, ex.alpha, c, rng, &features);
  EXPECT_EQ(m.encoder_calls(), 0);
  EXPECT_EQ(m.decoder_calls(), 1);
  EXPECT_EQ(draw.x_train.shape(), ex.alpha.shape());
  EXPECT_EQ(params_of(m), before);
  m.visit([](const std::string& name, const Tensor<float>&, const Tensor<float>& g) {
    for (float v : g.values()) ASSERT_EQ(v, 0.0f) << name;
  });
}

TEST(Uti, TargetNames) {
  EXPECT_EQ(parse_uti_target("ground_truth"), UtiTarget::GroundTruth);
  EXPECT_EQ(parse_uti_target(to_string(UtiTarget::Prediction)), UtiTarget::Prediction);
  EXPECT_THROW(parse_uti_target("gt"), DomainError);
}

TEST(AdamW, MatchesHandComputedSteps) {
  Tensor<double> p(1, 1, 1, 2), g(1, 1, 1, 2);
  p[0] = 1.0;
  p[1] = -2.0;
  const double lr = 0.1, wd = 0.01;
  AdamW opt(lr, wd);
  const std::vector<Tensor<double>*> values{&p};
  const std::vector<const Tensor<double>*> grads{&g};

  const double g1[2] = {0.5, -0.1}, g2[2] = {-0.2, 0.3};
  double want[2] = {1.0, -2.0};
  for (int i = 0; i < 2; ++i) {
    // step 1: m = 0.1 g, v = 0.001 g^2, bias corrections 0.1 and 0.001
    const double m1 = 0.1 * g1[i], v1 = 0.001 * g1[i] * g1[i];
    want[i] -= lr * ((m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8) + wd * want[i]);
  }
  g[0] = g1[0];
  g[1] = g1[1];
  opt.step(values, grads);
  EXPECT_NEAR(p[0], want[0], 1e-12);
  EXPECT_NEAR(p[1], want[1], 1e-12);

  for (int i = 0; i < 2; ++i) {
    const double m2 = 0.9 * 0.1 * g1[i] + 0.1 * g2[i];
    const double v2 = 0.999 * 0.001 * g1[i] * g1[i] + 0.001 * g2[i] * g2[i];
    const double c1 = 1 - 0.9 * 0.9, c2 = 1 - 0.999 * 0.999;
    want[i] -= lr * ((m2 / c1) / (std::sqrt(v2 / c2) + 1e-8) + wd * want[i]);
  }
  g[0] = g2[0];
  g[1] = g2[1];
  opt.step(values, grads);
  EXPECT_NEAR(p[0], want[0], 1e-12);
  EXPECT_NEAR(p[1], want[1], 1e-12);
  EXPECT_EQ(opt.step_count(), 2);
  EXPECT_EQ(opt.first_moments()[0].size(), 2u);
}

TEST(AdamW, RejectsMismatchedLists) {
  Tensor<double> p(1, 1, 1, 2), g(1, 1, 1, 3);
  AdamW opt(0.1, 0.0);
  EXPECT_THROW(opt.step(std::vector<Tensor<double>*>{&p}, std::vector<const Tensor<double>*>{&g}), DomainError);
  EXPECT_THROW(opt.step(std::vector<Tensor<double>*>{&p}, std::vector<const Tensor<double>*>{}), DomainError);
}

TEST(TrainStep, ZeroLearningRateLeavesParameters) {
  Rng rng(4);
  MattingModel m(tiny_config(), rng);
  const auto before = params_of(m);
  AdamW opt(0.0, 0.0);
  for (bool uti : {false, true}) {
    TrainStepOptions o;
    o.uti_enabled = uti;
    const auto loss = train_step(m, {example(1), example(2)}, opt, rng, o);
    EXPECT_GT(loss.total, 0.0);
  }
  EXPECT_EQ(params_of(m), before);
  EXPECT_THROW(train_step(m, {}, opt, rng), DomainError);
}

TEST(TrainStep, RepeatedSampleLossDecreases) {
  Rng init(5);
  MattingModel m(tiny_config(), init);
  AdamW opt(1e-4, 0.0);
  const std::vector<TrainExample> batch{example(7)};
  double prev = std::numeric_limits<double>::infinity();
  int decreases = 0;
  for (int step = 0; step < 200; ++step) {
    Rng rng(11);  // same time and noise every step
    const double loss = train_step(m, batch, opt, rng).total;
    if (loss < prev) ++decreases;
    prev = loss;
  }
  EXPECT_GE(decreases, 180);
}

TEST(TrainStep, NonFiniteLossAborts) {
  Rng rng(6);
  MattingModel m(tiny_config(), rng);
  auto ex = example(3);
  ex.alpha[0] = std::numeric_limits<float>::quiet_NaN();
  const auto before = params_of(m);
  AdamW opt(1e-3, 0.0);
  EXPECT_THROW(train_step(m, {ex}, opt, rng), NumericError);
  EXPECT_EQ(params_of(m), before);
}

TEST(TrainConfig, KeyValueRoundTripAndValidation) {
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.uti_start_epoch = 5;
  cfg.lr = 3e-4;
  cfg.seed = 99;
  cfg.uti_target = UtiTarget::Prediction;
  cfg.loss.lap = 0.5;
  cfg.model.schedule.kind = ScheduleKind::Cosine;
  KeyValues kv;
  cfg.write(kv);
  const auto parsed = KeyValues::parse(kv.str());
  const auto back = TrainConfig::from_keyvalues(parsed);
  EXPECT_NO_THROW(parsed.require_all_consumed());
  EXPECT_EQ(back.epochs, 12);
  EXPECT_EQ(back.resolved_uti_start(), 5);
  EXPECT_EQ(back.lr, 3e-4);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.uti_target, UtiTarget::Prediction);
  EXPECT_EQ(back.loss, cfg.loss);
  EXPECT_EQ(back.model, cfg.model);

  EXPECT_EQ(TrainConfig{}.resolved_uti_start(), 225);
  EXPECT_THROW(TrainConfig::from_keyvalues(KeyValues::parse("crop = 40")), DomainError);
  EXPECT_THROW(TrainConfig::from_keyvalues(KeyValues::parse("epochs = 4\nuti_start_epoch = 5")), DomainError);
  EXPECT_THROW(TrainConfig::from_keyvalues(KeyValues::parse("uti.target = nope")), DomainError);
}

TEST(Fit, DeterministicAndCheckpointed) {
  Rng data_rng(8);
  std::vector<SyntheticSample> data;
  for (int i = 0; i < 3; ++i) data.push_back(gen_sample(data_rng, 32));
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.crop = 16;
  cfg.batch_size = 2;
  cfg.model = tiny_config();
  cfg.uti_start_epoch = 2;

  const auto dir = fs::temp_directory_path() / "diffmatte_fit_test";
  fs::remove_all(dir);
  std::vector<EpochLog> logs;
  const auto a = fit(cfg, data, {dir, [&](const EpochLog& l) { logs.push_back(l); }});
  const auto b = fit(cfg, data);
  EXPECT_EQ(serialize_checkpoint(a.model), serialize_checkpoint(b.model));
  EXPECT_TRUE(fs::exists(dir / "latest.dmck"));
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(dir / "final.dmck")), serialize_checkpoint(a.model));
  ASSERT_EQ(logs.size(), 3u);
  EXPECT_FALSE(logs[1].uti);
  EXPECT_TRUE(logs[2].uti);
  fs::remove_all(dir);

  cfg.seed = 1;
  EXPECT_NE(serialize_checkpoint(fit(cfg, data).model), serialize_checkpoint(a.model));
}

TEST(Fit, UtiNeverFiresWhenStartEqualsEpochs) {
  Rng data_rng(9);
  const std::vector<SyntheticSample> data{gen_sample(data_rng, 16)};
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.uti_start_epoch = 2;
  cfg.crop = 16;
  cfg.model = tiny_config();
  const auto r = fit(cfg, data);
  for (const auto& l : r.history) EXPECT_FALSE(l.uti);
  EXPECT_THROW(fit(cfg, {}), DomainError);
}
