#include "diffmatte/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "diffmatte/checkpoint.hpp"

namespace diffmatte {

std::string to_string(UtiTarget target) {
  return target == UtiTarget::GroundTruth ? "ground_truth" : "prediction";
}

UtiTarget parse_uti_target(std::string_view text) {
  if (text == "ground_truth") return UtiTarget::GroundTruth;
  if (text == "prediction") return UtiTarget::Prediction;
  throw DomainError("unknown uti.target '" + std::string(text) + "' (expected ground_truth|prediction)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw DomainError("epochs must be >= 1");
  if (resolved_uti_start() > epochs) throw DomainError("uti_start_epoch must not exceed epochs");
  if (batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (crop < 16 || crop % 16 != 0) throw DomainError("crop must be a positive multiple of 16");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw DomainError("lr must be a finite non-negative number");
  if (!(weight_decay >= 0.0)) throw DomainError("weight_decay must be non-negative");
  if (checkpoint_every < 0) throw DomainError("checkpoint_every must be non-negative");
  if (crop % model.net.feature_stride != 0) throw DomainError("crop must be divisible by the feature stride");
  model.net.validate();
  model.schedule.validate();
}

TrainConfig TrainConfig::from_keyvalues(const KeyValues& kv, const TrainConfig& defaults) {
  TrainConfig cfg = defaults;
  cfg.epochs = kv.get_int("epochs", cfg.epochs);
  cfg.uti_start_epoch = kv.get_int("uti_start_epoch", cfg.uti_start_epoch);
  cfg.batch_size = kv.get_int("batch_size", cfg.batch_size);
  cfg.crop = kv.get_int("crop", cfg.crop);
  cfg.lr = kv.get_double("lr", cfg.lr);
  cfg.weight_decay = kv.get_double("weight_decay", cfg.weight_decay);
  cfg.seed = kv.get_u64("seed", cfg.seed);
  cfg.checkpoint_every = kv.get_int("checkpoint_every", cfg.checkpoint_every);
  cfg.uti_target = parse_uti_target(kv.get_string("uti.target", to_string(cfg.uti_target)));
  cfg.loss.sp_l1 = kv.get_double("loss.sp_l1", cfg.loss.sp_l1);
  cfg.loss.l2 = kv.get_double("loss.l2", cfg.loss.l2);
  cfg.loss.lap = kv.get_double("loss.lap", cfg.loss.lap);
  cfg.loss.grad = kv.get_double("loss.grad", cfg.loss.grad);
  cfg.model = read_model_config(kv, cfg.model);
  cfg.validate();
  return cfg;
}

void TrainConfig::write(KeyValues& kv) const {
  kv.set("epochs", std::to_string(epochs));
  kv.set("uti_start_epoch", std::to_string(resolved_uti_start()));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("crop", std::to_string(crop));
  kv.set("lr", format_double(lr));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("seed", std::to_string(seed));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  kv.set("uti.target", to_string(uti_target));
  kv.set("loss.sp_l1", format_double(loss.sp_l1));
  kv.set("loss.l2", format_double(loss.l2));
  kv.set("loss.lap", format_double(loss.lap));
  kv.set("loss.grad", format_double(loss.grad));
  write_model_config(model, kv);
}

template <typename T>
void AdamW::step(const std::vector<Tensor<T>*>& values, const std::vector<const Tensor<T>*>& grads) {
  if (values.size() != grads.size()) throw DomainError("AdamW: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto* v : values) {
      m_.emplace_back(v->size(), 0.0);
      v_.emplace_back(v->size(), 0.0);
    }
  }
  if (m_.size() != values.size()) throw DomainError("AdamW: parameter list changed between steps");
  ++steps_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < values.size(); ++k) {
    Tensor<T>& p = *values[k];
    const Tensor<T>& g = *grads[k];
    p.require_same_shape(g, "AdamW");
    if (m_[k].size() != p.size()) throw DomainError("AdamW: moment shape mismatch");
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * gi;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * gi * gi;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      const double pi = static_cast<double>(p[i]);
      p[i] = static_cast<T>(pi - lr_ * (m_hat / (std::sqrt(v_hat) + kEpsilon) + weight_decay_ * pi));
    }
  }
}

template void AdamW::step<float>(const std::vector<Tensor<float>*>&, const std::vector<const Tensor<float>*>&);
template void AdamW::step<double>(const std::vector<Tensor<double>*>&, const std::vector<const Tensor<double>*>&);

double sample_time(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

namespace {

/// Noises each sample of a model-space batch at its own time.
Tensor<float> forward_sample_batch(const Tensor<float>& x0, std::span<const double> t, const ScheduleSpec& spec,
                                   const Tensor<float>& noise) {
  x0.require_same_shape(noise, "forward_sample_batch");
  Tensor<float> out(x0.shape());
  const std::size_t per = x0.size() / static_cast<std::size_t>(x0.n());
  for (int n = 0; n < x0.n(); ++n) {
    const double g = gamma(spec, t[static_cast<std::size_t>(n)]);
    const double signal = std::sqrt(g);
    const double sigma = std::sqrt(1.0 - g);
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      out[i] = static_cast<float>(signal * static_cast<double>(x0[i]) + sigma * static_cast<double>(noise[i]));
    }
  }
  return out;
}

Tensor<float> normal_like(const Tensor<float>& t, Rng& rng) {
  Tensor<float> z(t.shape());
  fill_normal(z, rng);
  return z;
}

template <typename F>
Tensor<float> stack_field(const std::vector<TrainExample>& batch, F&& field) {
  std::vector<Tensor<float>> items;
  items.reserve(batch.size());
  for (const auto& ex : batch) items.push_back(field(ex));
  return stack_batch<float>(items);
}

}  // namespace

UtiDraw uti_sample(const MattingModel& frozen, const Tensor<float>& x0_alpha, const Conditioning& c, Rng& rng,
                   const Tensor<float>* features) {
  const ScheduleSpec& spec = frozen.schedule();
  const int n = x0_alpha.n();
  UtiDraw draw;
  draw.t.resize(static_cast<std::size_t>(n));
  draw.t_prime.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double delta = sample_time(rng);
    const double t = std::uniform_real_distribution<double>(0.0, 1.0 - delta)(rng);
    draw.t[static_cast<std::size_t>(i)] = t;
    draw.t_prime[static_cast<std::size_t>(i)] = std::min(1.0, t + delta);
  }
  const Tensor<float> cond = c.stacked();
  const Tensor<float> feats = features != nullptr ? *features : frozen.encode(cond);
  const Tensor<float> x_prime =
      forward_sample_batch(to_model_space(x0_alpha, spec.input_scale), draw.t_prime, spec, normal_like(x0_alpha, rng));
  draw.prediction = frozen.decode(concat_channels(x_prime, cond), draw.t_prime, feats);
  const Tensor<float> m = to_model_space(draw.prediction, spec.input_scale);
  draw.x_train = forward_sample_batch(m, draw.t, spec, normal_like(x0_alpha, rng));
  return draw;
}

LossBreakdown train_step(MattingModel& model, const std::vector<TrainExample>& batch, AdamW& opt, Rng& rng,
                         const TrainStepOptions& options) {
  if (batch.empty()) throw DomainError("train_step: empty batch");
  const ScheduleSpec& spec = model.schedule();
  const Tensor<float> alpha = stack_field(batch, [](const TrainExample& e) { return e.alpha; });
  const Conditioning c{stack_field(batch, [](const TrainExample& e) { return e.image; }),
                       stack_field(batch, [](const TrainExample& e) { return e.trimap; })};
  const Tensor<float> cond = c.stacked();

  EncoderTape<float> etape;
  const Tensor<float> features = model.encode(cond, &etape);

  Tensor<float> x_t;
  Tensor<float> target = alpha;
  std::vector<double> t;
  if (options.uti_enabled) {
    UtiDraw draw = uti_sample(model, alpha, c, rng, &features);
    x_t = std::move(draw.x_train);
    t = std::move(draw.t);
    if (options.uti_target == UtiTarget::Prediction) target = std::move(draw.prediction);
  } else {
    t.resize(batch.size());
    for (auto& ti : t) ti = sample_time(rng);
    x_t = forward_sample_batch(to_model_space(alpha, spec.input_scale), t, spec, normal_like(alpha, rng));
  }

  DecoderTape<float> dtape;
  const Tensor<float> pred = model.decode(concat_channels(x_t, cond), t, features, &dtape);
  Tensor<float> d_pred(pred.shape());
  const LossBreakdown loss = matting_loss(pred, target, c.trimap, options.weights, &d_pred);
  if (!std::isfinite(loss.total) || !d_pred.all_finite()) {
    throw NumericError("non-finite training loss (total=" + std::to_string(loss.total) +
                       ", sp_l1=" + std::to_string(loss.sp_l1) + ", l2=" + std::to_string(loss.l2) +
                       ", lap=" + std::to_string(loss.lap) + ", grad=" + std::to_string(loss.grad) + ")");
  }

  model.zero_grad();
  const auto grads = model.decoder.backward(dtape, d_pred);
  model.encoder.backward(etape, grads.features);
  opt.step(model);
  return loss;
}

FitResult fit(const TrainConfig& cfg, const std::vector<SyntheticSample>& dataset, const FitOptions& options) {
  cfg.validate();
  if (dataset.empty()) throw DomainError("fit: empty dataset");
  Rng rng(cfg.seed);
  FitResult result{MattingModel(cfg.model, rng), {}};
  MattingModel& model = result.model;
  AdamW opt(cfg.lr, cfg.weight_decay);
  const TrainStepOptions base{.uti_enabled = false, .uti_target = cfg.uti_target, .weights = cfg.loss};
  const int uti_start = cfg.resolved_uti_start();
  if (options.checkpoint_dir) std::filesystem::create_directories(*options.checkpoint_dir);

  std::vector<std::size_t> order(dataset.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    TrainStepOptions step_options = base;
    step_options.uti_enabled = epoch >= uti_start;

    EpochLog log{epoch, step_options.uti_enabled, {}};
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<TrainExample> batch;
      for (std::size_t k = start; k < end; ++k) {
        SyntheticSample s = random_crop_flip(dataset[order[k]], cfg.crop, rng);
        batch.push_back({std::move(s.alpha), std::move(s.image), std::move(s.trimap)});
      }
      const LossBreakdown l = train_step(model, batch, opt, rng, step_options);
      log.mean.sp_l1 += l.sp_l1;
      log.mean.l2 += l.l2;
      log.mean.lap += l.lap;
      log.mean.grad += l.grad;
      log.mean.total += l.total;
      ++batches;
    }
    log.mean.sp_l1 /= batches;
    log.mean.l2 /= batches;
    log.mean.lap /= batches;
    log.mean.grad /= batches;
    log.mean.total /= batches;
    result.history.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
    if (options.checkpoint_dir && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      save_checkpoint(model, *options.checkpoint_dir / "latest.dmck");
    }
  }
  if (options.checkpoint_dir) save_checkpoint(model, *options.checkpoint_dir / "final.dmck");
  return result;
}

}  // namespace diffmatte
