#include "diffmatte/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "diffmatte/trimap.hpp"

namespace diffmatte {

void Conditioning::validate() const {
  if (image.c() != 3) throw DomainError("conditioning image must have 3 channels, got " + image.shape().str());
  if (trimap.n() != image.n() || trimap.h() != image.h() || trimap.w() != image.w()) {
    throw DomainError("trimap " + trimap.shape().str() + " does not match image " + image.shape().str());
  }
  validate_trimap(trimap);
  for (float v : image.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DomainError("image values must lie in [0, 1]");
  }
}

Tensor<float> Conditioning::stacked() const { return concat_channels(image, trimap); }

std::string to_string(SamplerMode mode) {
  return mode == SamplerMode::Stochastic ? "stochastic" : "deterministic";
}

SamplerMode parse_sampler_mode(std::string_view text) {
  if (text == "stochastic") return SamplerMode::Stochastic;
  if (text == "deterministic") return SamplerMode::Deterministic;
  throw DomainError("unknown sampler mode '" + std::string(text) + "' (expected stochastic|deterministic)");
}

Tensor<float> to_model_space(const Tensor<float>& alpha, double input_scale) {
  Tensor<float> out(alpha.shape());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = static_cast<float>(input_scale * (2.0 * static_cast<double>(alpha[i]) - 1.0));
  }
  return out;
}

Tensor<float> from_model_space(const Tensor<float>& x, double input_scale) {
  if (!(input_scale > 0.0)) throw DomainError("input scale must be positive");
  Tensor<float> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = (static_cast<double>(x[i]) / input_scale + 1.0) / 2.0;
    out[i] = static_cast<float>(std::clamp(a, 0.0, 1.0));
  }
  return out;
}

Tensor<float> forward_sample(const Tensor<float>& x0, double t, const ScheduleSpec& spec, const Tensor<float>& noise) {
  x0.require_same_shape(noise, "forward_sample");
  const double g = gamma(spec, t);
  const double signal = std::sqrt(g);
  const double sigma = std::sqrt(1.0 - g);
  Tensor<float> out(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    out[i] = static_cast<float>(signal * static_cast<double>(x0[i]) + sigma * static_cast<double>(noise[i]));
  }
  return out;
}

Tensor<float> ddim_step(const Tensor<float>& x_t, const Tensor<float>& x0_hat, double t, double t_prev,
                        const ScheduleSpec& spec, SamplerMode mode, Rng& rng) {
  if (!(t_prev < t)) throw DomainError("ddim_step requires t_prev < t");
  x_t.require_same_shape(x0_hat, "ddim_step");
  Tensor<float> clamped(x0_hat.shape());
  for (std::size_t i = 0; i < x0_hat.size(); ++i) clamped[i] = std::clamp(x0_hat[i], 0.0f, 1.0f);
  const Tensor<float> m = to_model_space(clamped, spec.input_scale);

  if (mode == SamplerMode::Stochastic) {
    Tensor<float> z(x_t.shape());
    fill_normal(z, rng);
    return forward_sample(m, t_prev, spec, z);
  }
  const double g = gamma(spec, t);
  if (g >= 1.0) return m;
  const double signal = std::sqrt(g);
  const double sigma = std::sqrt(1.0 - g);
  Tensor<float> eps(x_t.shape());
  for (std::size_t i = 0; i < eps.size(); ++i) {
    eps[i] = static_cast<float>((static_cast<double>(x_t[i]) - signal * static_cast<double>(m[i])) / sigma);
  }
  return forward_sample(m, t_prev, spec, eps);
}

Tensor<float> decoder_input(const Tensor<float>& x, const Conditioning& c) {
  return concat_channels(x, c.stacked());
}

namespace {

SampleTrace reverse_process(const MattingModel& model, const Conditioning& c, const Tensor<float>* gt, int steps,
                            SamplerMode mode, Rng& rng) {
  const TimeGrid grid = make_time_grid(steps);
  c.validate();
  const Shape alpha_shape{c.image.n(), 1, c.image.h(), c.image.w()};
  if (gt != nullptr && !(gt->shape() == alpha_shape)) {
    throw DomainError("ground-truth alpha " + gt->shape().str() + " does not match conditioning " + alpha_shape.str());
  }
  const ScheduleSpec& spec = model.schedule();
  const Tensor<float> cond = c.stacked();
  using Clock = std::chrono::steady_clock;
  const auto since = [](Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); };
  SampleTrace trace;
  auto start = Clock::now();
  const Tensor<float> features = model.encode(cond);
  trace.encoder_seconds = since(start);

  Tensor<float> x(alpha_shape);
  fill_normal(x, rng);
  trace.steps.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    start = Clock::now();
    const double t = grid.steps[i];
    const std::vector<double> times(static_cast<std::size_t>(alpha_shape.n), t);
    Tensor<float> pred = model.decode(concat_channels(x, cond), times, features);
    x = ddim_step(x, gt != nullptr ? *gt : pred, t, grid.steps[i + 1], spec, mode, rng);
    trace.steps.push_back({t, std::move(pred), since(start)});
  }
  trace.alpha = apply_known_regions(trace.steps.back().prediction, c.trimap);
  return trace;
}

}  // namespace

SampleTrace sample(const MattingModel& model, const Conditioning& c, int steps, SamplerMode mode, Rng& rng) {
  return reverse_process(model, c, nullptr, steps, mode, rng);
}

SampleTrace consistent_sample(const MattingModel& model, const Conditioning& c, const Tensor<float>& gt_alpha,
                              int steps, Rng& rng, SamplerMode mode) {
  return reverse_process(model, c, &gt_alpha, steps, mode, rng);
}

}  // namespace diffmatte
