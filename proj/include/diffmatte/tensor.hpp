#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "diffmatte/errors.hpp"

namespace diffmatte {

using Rng = std::mt19937_64;

// Vectorised reductions peel an unaligned head, so the summation order (and the
// last bits of the result) would otherwise depend on where malloc put the buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Extents of a rank-4 NCHW array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + "]";
  }
};

/// Dense NCHW array with contiguous storage. Float is the storage type for
/// models and images; double is used for gradient checking and metrics.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw DomainError("negative tensor extent " + shape.str());
    }
  }
  Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  std::size_t index(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Pointer to the H*W plane of sample `n`, channel `c`.
  T* plane(int n, int c) noexcept { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const noexcept { return data_.data() + index(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  Tensor& operator+=(const Tensor& other) {
    require_same_shape(other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  void require_same_shape(const Tensor& other, const char* op) const {
    if (!(shape_ == other.shape_)) {
      throw DomainError(std::string(op) + ": shape mismatch " + shape_.str() + " vs " + other.shape_.str());
    }
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  AlignedVector<T> data_;
};

/// Fills with i.i.d. standard normal draws.
template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
}

/// Copies sample `index` of a batch into a new N=1 tensor.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, int index) {
  Tensor<T> out(1, t.c(), t.h(), t.w());
  const std::size_t per = out.size();
  std::copy_n(t.data() + per * static_cast<std::size_t>(index), per, out.data());
  return out;
}

/// Stacks equally shaped N=1 tensors along the batch axis.
template <typename T>
Tensor<T> stack_batch(std::span<const Tensor<T>> items) {
  if (items.empty()) throw DomainError("stack_batch: empty input");
  const Shape s = items.front().shape();
  Tensor<T> out(static_cast<int>(items.size()) * s.n, s.c, s.h, s.w);
  T* dst = out.data();
  for (const auto& item : items) {
    if (!(Shape{s.n, s.c, s.h, s.w} == item.shape())) throw DomainError("stack_batch: shape mismatch");
    dst = std::copy(item.data(), item.data() + item.size(), dst);
  }
  return out;
}

/// Concatenates two batches along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw DomainError("concat_channels: incompatible " + a.shape().str() + " and " + b.shape().str());
  }
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t plane = static_cast<std::size_t>(a.h()) * a.w();
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.plane(n, 0), plane * a.c(), out.plane(n, 0));
    std::copy_n(b.plane(n, 0), plane * b.c(), out.plane(n, a.c()));
  }
  return out;
}

/// Inverse of concat_channels: splits off the first `channels` channels.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int channels) {
  if (channels < 0 || channels > x.c()) throw DomainError("split_channels: bad split point");
  Tensor<T> a(x.n(), channels, x.h(), x.w());
  Tensor<T> b(x.n(), x.c() - channels, x.h(), x.w());
  const std::size_t plane = static_cast<std::size_t>(x.h()) * x.w();
  for (int n = 0; n < x.n(); ++n) {
    std::copy_n(x.plane(n, 0), plane * a.c(), a.plane(n, 0));
    std::copy_n(x.plane(n, channels), plane * b.c(), b.plane(n, 0));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace diffmatte
