#pragma once

#include <span>
#include <string>
#include <vector>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

/// 2-D convolution (cross-correlation) with "same" zero padding and stride 1 or 2.
/// Output extents are ceil(input / stride).
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and bias.
  void init(Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const;

  /// Accumulates weight/bias gradients for output gradient `dy` and returns dL/dx.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& dy);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int output_extent(int extent) const { return (extent - 1) / stride_ + 1; }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight, weight_grad);
    f(prefix + ".bias", bias, bias_grad);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight, weight_grad);
    f(prefix + ".bias", bias, bias_grad);
  }

  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [1, out, 1, 1]
  Tensor<T> weight_grad;
  Tensor<T> bias_grad;

 private:
  void check_input(const Tensor<T>& x) const;
  void im2col(const T* src, int h, int w, T* col) const;
  void col2im(const T* col, int h, int w, T* dst) const;

  int in_ = 0;
  int out_ = 0;
  int kernel_ = 3;
  int stride_ = 1;
};

/// Learnable map from the scalar time t to one additive bias per channel:
/// e(t) = W * phi(t) + b, where phi(t) = [t] by default or
/// [t, sin(2^k pi t), cos(2^k pi t) for k < frequencies] when featurised.
template <typename T>
class TimeEmbedding {
 public:
  TimeEmbedding() = default;
  TimeEmbedding(int channels, int frequencies);

  void init(Rng& rng);

  int channels() const { return channels_; }
  int feature_count() const { return 1 + 2 * frequencies_; }
  std::vector<double> features(double t) const;

  /// Embedding vector for a single time value.
  std::vector<T> embed(double t) const;

  /// x[n, c] += e(t[n])[c]
  void add_to(Tensor<T>& x, std::span<const double> t) const;

  /// Accumulates gradients given dL/d(x + e) at the injection point.
  void backward(const Tensor<T>& dy, std::span<const double> t);

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight, weight_grad);
    f(prefix + ".bias", bias, bias_grad);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight, weight_grad);
    f(prefix + ".bias", bias, bias_grad);
  }

  Tensor<T> weight;  // [channels, features, 1, 1]
  Tensor<T> bias;    // [1, channels, 1, 1]
  Tensor<T> weight_grad;
  Tensor<T> bias_grad;

 private:
  int channels_ = 0;
  int frequencies_ = 0;
};

template <typename T>
struct BlockTape {
  Tensor<T> input;
  Tensor<T> h1;  // conv1 output + time bias
  Tensor<T> a1;
  Tensor<T> h2;
  Tensor<T> a2;
};

/// conv -> (+time) -> SiLU -> conv -> SiLU -> conv, plus a 1x1 projected skip.
/// The first conv and the projection carry the block stride.
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(int in_channels, int out_channels, int stride, int time_frequencies);

  void init(Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, std::span<const double> t, BlockTape<T>* tape) const;
  Tensor<T> backward(const BlockTape<T>& tape, std::span<const double> t, const Tensor<T>& dy);

  int in_channels() const { return conv1.in_channels(); }
  int out_channels() const { return conv1.out_channels(); }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    visit_impl(*this, prefix, f);
  }
  template <class F>
  void visit(const std::string& prefix, F&& f) const {
    visit_impl(*this, prefix, f);
  }

  Conv2d<T> conv1;
  Conv2d<T> conv2;
  Conv2d<T> conv3;
  Conv2d<T> proj;
  TimeEmbedding<T> time;

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, const std::string& prefix, F& f) {
    self.conv1.visit(prefix + ".conv1", f);
    self.time.visit(prefix + ".time", f);
    self.conv2.visit(prefix + ".conv2", f);
    self.conv3.visit(prefix + ".conv3", f);
    self.proj.visit(prefix + ".proj", f);
  }
};

template <typename T>
Tensor<T> silu(const Tensor<T>& x);
template <typename T>
Tensor<T> silu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
Tensor<T> logistic(const Tensor<T>& x);
/// Gradient through the logistic given its output y.
template <typename T>
Tensor<T> logistic_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// Nearest-neighbour x2 upsampling and its adjoint (2x2 sum pooling).
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy);

}  // namespace diffmatte
