#include "diffmatte/layers.hpp"

#include <Eigen/Core>
#include <cmath>
#include <numbers>

namespace diffmatte {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride)
    : weight(out_channels, in_channels, kernel, kernel),
      bias(1, out_channels, 1, 1),
      weight_grad(out_channels, in_channels, kernel, kernel),
      bias_grad(1, out_channels, 1, 1),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride) {
  if (in_channels < 1 || out_channels < 1) throw DomainError("conv2d: channel counts must be positive");
  if (kernel != 1 && kernel != 3) throw DomainError("conv2d: kernel must be 1 or 3");
  if (stride != 1 && stride != 2) throw DomainError("conv2d: stride must be 1 or 2");
}

template <typename T>
void Conv2d<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * kernel_ * kernel_));
  fill_uniform(weight, rng, -bound, bound);
  fill_uniform(bias, rng, -bound, bound);
  weight_grad.zero();
  bias_grad.zero();
}

template <typename T>
void Conv2d<T>::check_input(const Tensor<T>& x) const {
  if (x.c() != in_) {
    throw DomainError("conv2d: expected " + std::to_string(in_) + " input channels, got " + x.shape().str());
  }
}

template <typename T>
void Conv2d<T>::im2col(const T* src, int h, int w, T* col) const {
  const int ho = output_extent(h);
  const int wo = output_extent(w);
  const int pad = kernel_ / 2;
  for (int ci = 0; ci < in_; ++ci) {
    const T* plane = src + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        T* row = col + static_cast<std::size_t>((ci * kernel_ + ky) * kernel_ + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ + ky - pad;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst, wo, T(0));
            continue;
          }
          const T* line = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ + kx - pad;
            dst[ox] = (ix >= 0 && ix < w) ? line[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* col, int h, int w, T* dst) const {
  const int ho = output_extent(h);
  const int wo = output_extent(w);
  const int pad = kernel_ / 2;
  for (int ci = 0; ci < in_; ++ci) {
    T* plane = dst + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const T* row = col + static_cast<std::size_t>((ci * kernel_ + ky) * kernel_ + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride_ + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* line = plane + static_cast<std::size_t>(iy) * w;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride_ + kx - pad;
            if (ix >= 0 && ix < w) line[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  check_input(x);
  const int ho = output_extent(x.h());
  const int wo = output_extent(x.w());
  const int k = in_ * kernel_ * kernel_;
  const int p = ho * wo;
  Tensor<T> y(x.n(), out_, ho, wo);
  const bool direct = kernel_ == 1 && stride_ == 1;
  AlignedVector<T> col(direct ? 0 : static_cast<std::size_t>(k) * p);
  Eigen::Map<const RowMatrix<T>> wmat(weight.data(), out_, k);
  for (int n = 0; n < x.n(); ++n) {
    const T* cp = x.plane(n, 0);
    if (!direct) {
      im2col(x.plane(n, 0), x.h(), x.w(), col.data());
      cp = col.data();
    }
    Eigen::Map<const RowMatrix<T>> cmat(cp, k, p);
    Eigen::Map<RowMatrix<T>> ymat(y.plane(n, 0), out_, p);
    ymat.noalias() = wmat * cmat;
    for (int co = 0; co < out_; ++co) ymat.row(co).array() += bias[co];
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& dy) {
  check_input(x);
  const int ho = output_extent(x.h());
  const int wo = output_extent(x.w());
  if (dy.n() != x.n() || dy.c() != out_ || dy.h() != ho || dy.w() != wo) {
    throw DomainError("conv2d backward: gradient shape " + dy.shape().str() + " does not match output");
  }
  const int k = in_ * kernel_ * kernel_;
  const int p = ho * wo;
  const bool direct = kernel_ == 1 && stride_ == 1;
  Tensor<T> dx(x.shape());
  AlignedVector<T> col(direct ? 0 : static_cast<std::size_t>(k) * p);
  AlignedVector<T> dcol(direct ? 0 : static_cast<std::size_t>(k) * p);
  Eigen::Map<const RowMatrix<T>> wmat(weight.data(), out_, k);
  Eigen::Map<RowMatrix<T>> gw(weight_grad.data(), out_, k);
  for (int n = 0; n < x.n(); ++n) {
    Eigen::Map<const RowMatrix<T>> dymat(dy.plane(n, 0), out_, p);
    const T* cp = x.plane(n, 0);
    if (!direct) {
      im2col(x.plane(n, 0), x.h(), x.w(), col.data());
      cp = col.data();
    }
    Eigen::Map<const RowMatrix<T>> cmat(cp, k, p);
    gw.noalias() += dymat * cmat.transpose();
    for (int co = 0; co < out_; ++co) bias_grad[co] += dymat.row(co).sum();
    if (direct) {
      Eigen::Map<RowMatrix<T>> dxmat(dx.plane(n, 0), k, p);
      dxmat.noalias() = wmat.transpose() * dymat;
    } else {
      Eigen::Map<RowMatrix<T>> dcmat(dcol.data(), k, p);
      dcmat.noalias() = wmat.transpose() * dymat;
      col2im(dcol.data(), x.h(), x.w(), dx.plane(n, 0));
    }
  }
  return dx;
}

// --------------------------------------------------------- TimeEmbedding

template <typename T>
TimeEmbedding<T>::TimeEmbedding(int channels, int frequencies)
    : weight(channels, 1 + 2 * frequencies, 1, 1),
      bias(1, channels, 1, 1),
      weight_grad(channels, 1 + 2 * frequencies, 1, 1),
      bias_grad(1, channels, 1, 1),
      channels_(channels),
      frequencies_(frequencies) {
  if (channels < 1) throw DomainError("time embedding: channels must be positive");
  if (frequencies < 0) throw DomainError("time embedding: negative frequency count");
}

template <typename T>
void TimeEmbedding<T>::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(feature_count()));
  fill_uniform(weight, rng, -bound, bound);
  fill_uniform(bias, rng, -bound, bound);
  weight_grad.zero();
  bias_grad.zero();
}

template <typename T>
std::vector<double> TimeEmbedding<T>::features(double t) const {
  std::vector<double> phi;
  phi.reserve(static_cast<std::size_t>(feature_count()));
  phi.push_back(t);
  for (int k = 0; k < frequencies_; ++k) {
    const double arg = std::ldexp(std::numbers::pi, k) * t;
    phi.push_back(std::sin(arg));
    phi.push_back(std::cos(arg));
  }
  return phi;
}

template <typename T>
std::vector<T> TimeEmbedding<T>::embed(double t) const {
  const auto phi = features(t);
  const int f = feature_count();
  std::vector<T> e(static_cast<std::size_t>(channels_));
  for (int c = 0; c < channels_; ++c) {
    T acc = bias[c];
    for (int j = 0; j < f; ++j) acc += weight[static_cast<std::size_t>(c) * f + j] * static_cast<T>(phi[j]);
    e[c] = acc;
  }
  return e;
}

template <typename T>
void TimeEmbedding<T>::add_to(Tensor<T>& x, std::span<const double> t) const {
  if (x.c() != channels_ || static_cast<int>(t.size()) != x.n()) {
    throw DomainError("time embedding: shape " + x.shape().str() + " vs " + std::to_string(t.size()) + " times");
  }
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n) {
    const auto e = embed(t[n]);
    for (int c = 0; c < channels_; ++c) {
      T* p = x.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) p[i] += e[c];
    }
  }
}

template <typename T>
void TimeEmbedding<T>::backward(const Tensor<T>& dy, std::span<const double> t) {
  const std::size_t plane = static_cast<std::size_t>(dy.h()) * dy.w();
  const int f = feature_count();
  for (int n = 0; n < dy.n(); ++n) {
    const auto phi = features(t[n]);
    for (int c = 0; c < channels_; ++c) {
      const T* p = dy.plane(n, c);
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      bias_grad[c] += s;
      for (int j = 0; j < f; ++j) weight_grad[static_cast<std::size_t>(c) * f + j] += s * static_cast<T>(phi[j]);
    }
  }
}

// -------------------------------------------------------------- ResBlock

template <typename T>
ResBlock<T>::ResBlock(int in_channels, int out_channels, int stride, int time_frequencies)
    : conv1(in_channels, out_channels, 3, stride),
      conv2(out_channels, out_channels, 3, 1),
      conv3(out_channels, out_channels, 3, 1),
      proj(in_channels, out_channels, 1, stride),
      time(out_channels, time_frequencies) {}

template <typename T>
void ResBlock<T>::init(Rng& rng) {
  conv1.init(rng);
  time.init(rng);
  conv2.init(rng);
  conv3.init(rng);
  proj.init(rng);
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, std::span<const double> t, BlockTape<T>* tape) const {
  Tensor<T> h1 = conv1.forward(x);
  time.add_to(h1, t);
  Tensor<T> a1 = silu(h1);
  Tensor<T> h2 = conv2.forward(a1);
  Tensor<T> a2 = silu(h2);
  Tensor<T> y = conv3.forward(a2);
  y += proj.forward(x);
  if (tape != nullptr) {
    tape->input = x;
    tape->h1 = std::move(h1);
    tape->a1 = std::move(a1);
    tape->h2 = std::move(h2);
    tape->a2 = std::move(a2);
  }
  return y;
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const BlockTape<T>& tape, std::span<const double> t, const Tensor<T>& dy) {
  Tensor<T> da2 = conv3.backward(tape.a2, dy);
  Tensor<T> dh2 = silu_backward(tape.h2, da2);
  Tensor<T> da1 = conv2.backward(tape.a1, dh2);
  Tensor<T> dh1 = silu_backward(tape.h1, da1);
  time.backward(dh1, t);
  Tensor<T> dx = conv1.backward(tape.input, dh1);
  dx += proj.backward(tape.input, dy);
  return dx;
}

// ------------------------------------------------------------ functional

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
  return y;
}

template <typename T>
Tensor<T> silu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  x.require_same_shape(dy, "silu_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T s = sigmoid(x[i]);
    dx[i] = dy[i] * s * (T(1) + x[i] * (T(1) - s));
  }
  return dx;
}

template <typename T>
Tensor<T> logistic(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
  return y;
}

template <typename T>
Tensor<T> logistic_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  y.require_same_shape(dy, "logistic_backward");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
  return dx;
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c(), 2 * x.h(), 2 * x.w());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = y.plane(n, c);
      const int w2 = 2 * x.w();
      for (int iy = 0; iy < x.h(); ++iy) {
        T* row = dst + static_cast<std::size_t>(2 * iy) * w2;
        for (int ix = 0; ix < x.w(); ++ix) row[2 * ix] = row[2 * ix + 1] = src[iy * x.w() + ix];
        std::copy_n(row, w2, row + w2);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& dy) {
  if (dy.h() % 2 != 0 || dy.w() % 2 != 0) throw DomainError("upsample2x_backward: odd extents");
  Tensor<T> dx(dy.n(), dy.c(), dy.h() / 2, dy.w() / 2);
  for (int n = 0; n < dy.n(); ++n) {
    for (int c = 0; c < dy.c(); ++c) {
      for (int y = 0; y < dx.h(); ++y) {
        for (int x = 0; x < dx.w(); ++x) {
          dx(n, c, y, x) = dy(n, c, 2 * y, 2 * x) + dy(n, c, 2 * y, 2 * x + 1) + dy(n, c, 2 * y + 1, 2 * x) +
                           dy(n, c, 2 * y + 1, 2 * x + 1);
        }
      }
    }
  }
  return dx;
}

#define DIFFMATTE_INSTANTIATE(T)                                          \
  template class Conv2d<T>;                                               \
  template class TimeEmbedding<T>;                                        \
  template class ResBlock<T>;                                             \
  template Tensor<T> silu(const Tensor<T>&);                              \
  template Tensor<T> silu_backward(const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> logistic(const Tensor<T>&);                          \
  template Tensor<T> logistic_backward(const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> upsample2x(const Tensor<T>&);                        \
  template Tensor<T> upsample2x_backward(const Tensor<T>&);

DIFFMATTE_INSTANTIATE(float)
DIFFMATTE_INSTANTIATE(double)

#undef DIFFMATTE_INSTANTIATE

}  // namespace diffmatte
