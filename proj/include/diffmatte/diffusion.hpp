#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "diffmatte/model.hpp"
#include "diffmatte/schedules.hpp"

namespace diffmatte {

/// Fixed per-image guidance: RGB image [N, 3, H, W] in [0, 1] and trimap [N, 1, H, W].
struct Conditioning {
  Tensor<float> image;
  Tensor<float> trimap;

  void validate() const;
  /// cat(image, trimap), the encoder input.
  Tensor<float> stacked() const;
};

enum class SamplerMode { Stochastic, Deterministic };

std::string to_string(SamplerMode mode);
SamplerMode parse_sampler_mode(std::string_view text);

struct SampleStep {
  double t = 0.0;
  Tensor<float> prediction;  // decoder's clean-alpha estimate at t
  double seconds = 0.0;      // wall time of this step's decoder pass and update
};

struct SampleTrace {
  std::vector<SampleStep> steps;
  Tensor<float> alpha;  // last prediction with the trimap's known regions imposed
  double encoder_seconds = 0.0;
};

/// alpha in [0, 1] -> b * (2 alpha - 1).
Tensor<float> to_model_space(const Tensor<float>& alpha, double input_scale);
/// Inverse of to_model_space, clamped to [0, 1].
Tensor<float> from_model_space(const Tensor<float>& x, double input_scale);

/// X_t = sqrt(gamma(t)) * x0 + sqrt(1 - gamma(t)) * noise, with x0 already in model space.
Tensor<float> forward_sample(const Tensor<float>& x0, double t, const ScheduleSpec& spec, const Tensor<float>& noise);

/// One reverse update from t to t_prev < t, renoising the clean estimate `x0_hat` (alpha space).
/// Stochastic mode draws fresh noise; deterministic mode reuses the noise implied by x_t.
Tensor<float> ddim_step(const Tensor<float>& x_t, const Tensor<float>& x0_hat, double t, double t_prev,
                        const ScheduleSpec& spec, SamplerMode mode, Rng& rng);

/// cat(X, image, trimap) — the decoder input layout.
Tensor<float> decoder_input(const Tensor<float>& x, const Conditioning& c);

/// Full reverse process over `steps` uniform steps. The encoder runs once.
SampleTrace sample(const MattingModel& model, const Conditioning& c, int steps, SamplerMode mode, Rng& rng);

/// Like sample(), but every renoising uses `gt_alpha` instead of the model's estimate.
/// The trace still holds the model's per-step predictions.
SampleTrace consistent_sample(const MattingModel& model, const Conditioning& c, const Tensor<float>& gt_alpha,
                              int steps, Rng& rng, SamplerMode mode = SamplerMode::Stochastic);

}  // namespace diffmatte
