#pragma once

#include <atomic>
#include <span>
#include <string>
#include <vector>

#include "diffmatte/layers.hpp"
#include "diffmatte/schedules.hpp"

namespace diffmatte {

/// Channel layout of the diffusion decoder and the reference encoder.
struct DecoderConfig {
  int n_c = 5;             // decoder input: noisy alpha + RGB + trimap
  int n_f = 32;            // encoder feature channels
  int n_d = 32;            // base width
  int feature_stride = 16; // 16 or 32
  int time_frequencies = 0;
  std::vector<int> up_channels;  // empty: derived from n_d

  void validate() const;

  /// {n_d, 2n_d, 4n_d} plus an extra 4n_d for stride 32.
  std::vector<int> down_channels() const;
  /// {8n_d, 4n_d, 2n_d, n_d} with an extra leading 8n_d for stride 32,
  /// unless overridden through `up_channels`.
  std::vector<int> resolved_up_channels() const;
  /// Reference encoder stage widths, ending in n_f.
  std::vector<int> encoder_channels() const;

  bool operator==(const DecoderConfig&) const = default;
};

struct ModelConfig {
  DecoderConfig net;
  ScheduleSpec schedule;

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct EncoderTape {
  std::vector<Tensor<T>> inputs;
  std::vector<Tensor<T>> pre_activations;
};

/// Stand-in matting encoder: stride-2 conv + SiLU stages down to the feature stride.
template <typename T>
class ReferenceEncoder {
 public:
  ReferenceEncoder() = default;
  ReferenceEncoder(const DecoderConfig& cfg);

  void init(Rng& rng);

  /// conditioning: [N, 4, H, W] (RGB + trimap) -> [N, n_f, H/stride, W/stride]
  Tensor<T> forward(const Tensor<T>& conditioning, EncoderTape<T>* tape) const;
  /// Accumulates parameter gradients; returns dL/d(conditioning).
  Tensor<T> backward(const EncoderTape<T>& tape, const Tensor<T>& d_features);

  int stride() const { return stride_; }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < stages.size(); ++i) stages[i].visit(prefix + ".stage" + std::to_string(i), f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    for (std::size_t i = 0; i < stages.size(); ++i) stages[i].visit(prefix + ".stage" + std::to_string(i), f);
  }

  std::vector<Conv2d<T>> stages;

 private:
  int stride_ = 16;
};

template <typename T>
struct DecoderTape {
  std::vector<double> t;
  std::vector<BlockTape<T>> down;
  std::vector<BlockTape<T>> up;
  std::vector<int> skip_channels;
  Tensor<T> head_input;
  Tensor<T> output;
};

/// UNet-style diffusion decoder: one Down-Block per resolution, one Up-Block
/// per resolution starting from the encoder features, logistic matting head.
template <typename T>
class DiffusionDecoder {
 public:
  DiffusionDecoder() = default;
  explicit DiffusionDecoder(const DecoderConfig& cfg);

  void init(Rng& rng);

  /// input: [N, n_c, H, W]; t: one unit time per sample; features: [N, n_f, H/s, W/s].
  /// Returns alpha in [0, 1] with shape [N, 1, H, W].
  Tensor<T> forward(const Tensor<T>& input, std::span<const double> t, const Tensor<T>& features,
                    DecoderTape<T>* tape) const;

  struct Gradients {
    Tensor<T> input;
    Tensor<T> features;
  };
  /// Accumulates parameter gradients for dL/d(alpha); returns input and feature gradients.
  Gradients backward(const DecoderTape<T>& tape, const Tensor<T>& d_alpha);

  const DecoderConfig& config() const { return cfg_; }
  void check_shapes(const Tensor<T>& input, std::span<const double> t, const Tensor<T>& features) const;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    visit_impl(*this, prefix, f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    visit_impl(*this, prefix, f);
  }

  std::vector<ResBlock<T>> down;
  std::vector<ResBlock<T>> up;
  Conv2d<T> head;

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, const std::string& prefix, F& f) {
    for (std::size_t i = 0; i < self.down.size(); ++i) self.down[i].visit(prefix + ".down" + std::to_string(i), f);
    for (std::size_t i = 0; i < self.up.size(); ++i) self.up[i].visit(prefix + ".up" + std::to_string(i), f);
    self.head.visit(prefix + ".head", f);
  }

  DecoderConfig cfg_;
};

/// Invocation counters; copies start from the source's counts.
struct CallCounter {
  CallCounter() = default;
  CallCounter(const CallCounter& o) : value(o.value.load()) {}
  CallCounter& operator=(const CallCounter& o) {
    value.store(o.value.load());
    return *this;
  }
  long get() const { return value.load(); }
  void bump() const { value.fetch_add(1); }
  void reset() const { value.store(0); }

  mutable std::atomic<long> value{0};
};

/// Encoder (run once per image) plus diffusion decoder (run once per step).
template <typename T>
class MattingModelT {
 public:
  MattingModelT() = default;
  MattingModelT(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }
  const ScheduleSpec& schedule() const { return cfg_.schedule; }

  /// conditioning: [N, 4, H, W] -> encoder features.
  Tensor<T> encode(const Tensor<T>& conditioning, EncoderTape<T>* tape = nullptr) const;
  /// Decoder prediction of the clean alpha matte.
  Tensor<T> decode(const Tensor<T>& input, std::span<const double> t, const Tensor<T>& features,
                   DecoderTape<T>* tape = nullptr) const;

  long encoder_calls() const { return encoder_calls_.get(); }
  long decoder_calls() const { return decoder_calls_.get(); }
  void reset_counters() const {
    encoder_calls_.reset();
    decoder_calls_.reset();
  }

  void zero_grad();
  std::size_t parameter_count() const;

  template <typename U>
  MattingModelT<U> cast() const;

  template <class F>
  void visit(F&& f) {
    encoder.visit("encoder", f);
    decoder.visit("decoder", f);
  }
  template <class F>
  void visit(F&& f) const {
    encoder.visit("encoder", f);
    decoder.visit("decoder", f);
  }

  ReferenceEncoder<T> encoder;
  DiffusionDecoder<T> decoder;

 private:
  ModelConfig cfg_;
  CallCounter encoder_calls_;
  CallCounter decoder_calls_;
};

using MattingModel = MattingModelT<float>;

template <typename T>
template <typename U>
MattingModelT<U> MattingModelT<T>::cast() const {
  Rng rng(0);
  MattingModelT<U> out(cfg_, rng);
  std::vector<const Tensor<T>*> src;
  visit([&](const std::string&, const Tensor<T>& v, const Tensor<T>&) { src.push_back(&v); });
  std::size_t i = 0;
  out.visit([&](const std::string&, Tensor<U>& v, Tensor<U>& g) {
    v = src[i++]->template cast<U>();
    g.zero();
  });
  return out;
}

}  // namespace diffmatte
