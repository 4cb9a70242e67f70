#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "diffmatte/config.hpp"
#include "diffmatte/data.hpp"
#include "diffmatte/diffusion.hpp"
#include "diffmatte/losses.hpp"
#include "diffmatte/model.hpp"

namespace diffmatte {

/// What the network regresses after a UTI renoising: the ground truth (default)
/// or the frozen model's own estimate.
enum class UtiTarget { GroundTruth, Prediction };

std::string to_string(UtiTarget target);
UtiTarget parse_uti_target(std::string_view text);

/// Desk-scale network: n_d = 8, 16 encoder feature channels.
inline ModelConfig desk_model_config() {
  ModelConfig cfg;
  cfg.net.n_f = 16;
  cfg.net.n_d = 8;
  return cfg;
}

struct TrainConfig {
  int epochs = 300;
  int uti_start_epoch = -1;  // -1: 75% of epochs
  int batch_size = 4;
  int crop = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  ModelConfig model = desk_model_config();
  LossWeights loss;
  UtiTarget uti_target = UtiTarget::GroundTruth;
  int checkpoint_every = 1;  // epochs between checkpoint writes; 0 = only at the end

  int resolved_uti_start() const { return uti_start_epoch < 0 ? (epochs * 3) / 4 : uti_start_epoch; }
  void validate() const;

  /// Keys: epochs, uti_start_epoch, batch_size, crop, lr, weight_decay, seed,
  /// checkpoint_every, uti.target, loss.{sp_l1,l2,lap,grad}, decoder.*, schedule.*.
  static TrainConfig from_keyvalues(const KeyValues& kv, const TrainConfig& defaults);
  static TrainConfig from_keyvalues(const KeyValues& kv) { return from_keyvalues(kv, TrainConfig{}); }
  void write(KeyValues& kv) const;
};

/// AdamW with decoupled weight decay. Moments are kept in double precision.
class AdamW {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  AdamW(double lr, double weight_decay) : lr_(lr), weight_decay_(weight_decay) {}

  /// One update of `values` given `grads` (same order on every call).
  template <typename T>
  void step(const std::vector<Tensor<T>*>& values, const std::vector<const Tensor<T>*>& grads);

  template <typename T>
  void step(MattingModelT<T>& model) {
    std::vector<Tensor<T>*> values;
    std::vector<const Tensor<T>*> grads;
    model.visit([&](const std::string&, Tensor<T>& v, Tensor<T>& g) {
      values.push_back(&v);
      grads.push_back(&g);
    });
    step(values, grads);
  }

  long step_count() const { return steps_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  double lr_;
  double weight_decay_;
  long steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Uniform training time in [0, 1].
double sample_time(Rng& rng);

/// One supervised example: alpha [1,1,S,S], image [1,3,S,S], trimap [1,1,S,S].
struct TrainExample {
  Tensor<float> alpha;
  Tensor<float> image;
  Tensor<float> trimap;
};

struct UtiDraw {
  Tensor<float> x_train;      // renoised frozen estimate at time t, model space
  Tensor<float> prediction;   // frozen estimate at t + delta, alpha space
  std::vector<double> t;
  std::vector<double> t_prime;
};

/// Per sample: delta ~ U(0,1), t ~ U(0, 1 - delta), t' = t + delta. Noises the ground
/// truth to t', predicts with the frozen model, renoises that prediction to t.
/// `features` may carry already computed encoder features for `c`.
UtiDraw uti_sample(const MattingModel& frozen, const Tensor<float>& x0_alpha, const Conditioning& c, Rng& rng,
                   const Tensor<float>* features = nullptr);

struct TrainStepOptions {
  bool uti_enabled = false;
  UtiTarget uti_target = UtiTarget::GroundTruth;
  LossWeights weights;
};

/// Batched forward/backward plus one optimizer update; returns the batch-mean losses.
/// Throws NumericError if the loss is not finite (the model is left untouched).
LossBreakdown train_step(MattingModel& model, const std::vector<TrainExample>& batch, AdamW& opt, Rng& rng,
                         const TrainStepOptions& options = {});

struct EpochLog {
  int epoch = 0;
  bool uti = false;
  LossBreakdown mean;
};

struct FitOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

struct FitResult {
  MattingModel model;
  std::vector<EpochLog> history;
};

/// Trains a freshly initialised model on `dataset` (crop + flip each epoch).
FitResult fit(const TrainConfig& cfg, const std::vector<SyntheticSample>& dataset, const FitOptions& options = {});

}  // namespace diffmatte
