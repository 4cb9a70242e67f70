#include "diffmatte/losses.hpp"

#include <array>
#include <cmath>
#include <cstdlib>

#include "diffmatte/trimap.hpp"

namespace diffmatte {

namespace {

constexpr std::array<double, 5> kBinomial{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

template <typename T>
bool unknown_at(const Tensor<T>& trimap, std::size_t i) {
  return is_unknown(static_cast<float>(trimap[i]));
}

template <typename T>
void check_pair(const Tensor<T>& pred, const Tensor<T>& gt, const char* op) {
  pred.require_same_shape(gt, op);
  if (pred.c() != 1) throw DomainError(std::string(op) + ": expected single-channel mattes");
}

template <typename T>
void check_triple(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, const char* op) {
  check_pair(pred, gt, op);
  pred.require_same_shape(trimap, op);
}

template <typename T>
void check_grad(const Tensor<T>& pred, const Tensor<T>* grad, const char* op) {
  if (grad != nullptr) pred.require_same_shape(*grad, op);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Mirror index into [0, n) without repeating the edge sample.
int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i >= n ? period - i : i;
}

using Plane = std::vector<double>;

// Separable 5-tap filter with mirror padding; `gain` scales the taps.
Plane blur(const Plane& x, int h, int w, double gain) {
  Plane tmp(x.size(), 0.0);
  Plane out(x.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int a = 0; a < 5; ++a) acc += kBinomial[a] * x[y * w + mirror(c + a - 2, w)];
      tmp[y * w + c] = gain * acc;
    }
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int a = 0; a < 5; ++a) acc += kBinomial[a] * tmp[mirror(y + a - 2, h) * w + c];
      out[y * w + c] = gain * acc;
    }
  return out;
}

Plane blur_adjoint(const Plane& g, int h, int w, double gain) {
  Plane tmp(g.size(), 0.0);
  Plane out(g.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c)
      for (int a = 0; a < 5; ++a) tmp[mirror(y + a - 2, h) * w + c] += gain * kBinomial[a] * g[y * w + c];
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c)
      for (int a = 0; a < 5; ++a) out[y * w + mirror(c + a - 2, w)] += gain * kBinomial[a] * tmp[y * w + c];
  return out;
}

Plane subsample(const Plane& x, int h, int w) {
  Plane out(static_cast<std::size_t>(h / 2) * (w / 2));
  for (int y = 0; y < h / 2; ++y)
    for (int c = 0; c < w / 2; ++c) out[y * (w / 2) + c] = x[(2 * y) * w + 2 * c];
  return out;
}

Plane zero_insert(const Plane& x, int h, int w) {
  Plane out(static_cast<std::size_t>(h) * w * 4, 0.0);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < w; ++c) out[(2 * y) * (2 * w) + 2 * c] = x[y * w + c];
  return out;
}

// down = subsample(blur(x)); up = blur4(zero_insert(x)) with the kernel doubled per axis.
Plane pyr_down(const Plane& x, int h, int w) { return subsample(blur(x, h, w, 1.0), h, w); }
Plane pyr_up(const Plane& x, int h, int w) { return blur(zero_insert(x, h, w), 2 * h, 2 * w, 2.0); }
Plane pyr_down_adjoint(const Plane& g, int h, int w) { return blur_adjoint(zero_insert(g, h / 2, w / 2), h, w, 1.0); }
Plane pyr_up_adjoint(const Plane& g, int h, int w) { return subsample(blur_adjoint(g, 2 * h, 2 * w, 2.0), 2 * h, 2 * w); }

}  // namespace

std::vector<Plane> laplacian_pyramid(const Plane& plane, int h, int w) {
  const int div = 1 << (kPyramidLevels - 1);
  if (h % div != 0 || w % div != 0 || h == 0 || w == 0) {
    throw DomainError("laplacian pyramid: extents " + std::to_string(h) + "x" + std::to_string(w) +
                      " not divisible by " + std::to_string(div));
  }
  std::vector<Plane> levels;
  Plane current = plane;
  int ch = h;
  int cw = w;
  for (int s = 0; s < kPyramidLevels - 1; ++s) {
    Plane down = pyr_down(current, ch, cw);
    Plane up = pyr_up(down, ch / 2, cw / 2);
    for (std::size_t i = 0; i < current.size(); ++i) up[i] = current[i] - up[i];
    levels.push_back(std::move(up));
    current = std::move(down);
    ch /= 2;
    cw /= 2;
  }
  levels.push_back(std::move(current));
  return levels;
}

std::vector<double> reconstruct_pyramid(const std::vector<Plane>& pyramid, int h, int w) {
  if (pyramid.size() != kPyramidLevels) throw DomainError("reconstruct_pyramid: wrong level count");
  int ch = h >> (kPyramidLevels - 1);
  int cw = w >> (kPyramidLevels - 1);
  Plane current = pyramid.back();
  for (int s = kPyramidLevels - 2; s >= 0; --s) {
    Plane up = pyr_up(current, ch, cw);
    ch *= 2;
    cw *= 2;
    for (std::size_t i = 0; i < up.size(); ++i) up[i] += pyramid[s][i];
    current = std::move(up);
  }
  return current;
}

template <typename T>
double separate_l1(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, Tensor<T>* grad,
                   double weight) {
  check_triple(pred, gt, trimap, "separate_l1");
  check_grad(pred, grad, "separate_l1");
  const std::size_t plane = static_cast<std::size_t>(pred.h()) * pred.w();
  double total = 0.0;
  for (int n = 0; n < pred.n(); ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * plane;
    double sum_u = 0.0, sum_k = 0.0;
    std::size_t count_u = 0, count_k = 0;
    for (std::size_t i = base; i < base + plane; ++i) {
      const double d = std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
      if (unknown_at(trimap, i)) {
        sum_u += d;
        ++count_u;
      } else {
        sum_k += d;
        ++count_k;
      }
    }
    if (count_u > 0) total += sum_u / static_cast<double>(count_u);
    if (count_k > 0) total += sum_k / static_cast<double>(count_k);
    if (grad != nullptr) {
      const double scale = weight / pred.n();
      for (std::size_t i = base; i < base + plane; ++i) {
        const double s = sign(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
        const double region = unknown_at(trimap, i) ? static_cast<double>(count_u) : static_cast<double>(count_k);
        (*grad)[i] += static_cast<T>(scale * s / region);
      }
    }
  }
  return total / pred.n();
}

template <typename T>
double l2_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, Tensor<T>* grad, double weight) {
  check_triple(pred, gt, trimap, "l2_loss");
  check_grad(pred, grad, "l2_loss");
  const std::size_t plane = static_cast<std::size_t>(pred.h()) * pred.w();
  double total = 0.0;
  for (int n = 0; n < pred.n(); ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * plane;
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = base; i < base + plane; ++i) {
      if (!unknown_at(trimap, i)) continue;
      const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
      sum += d * d;
      ++count;
    }
    if (count == 0) continue;
    total += sum / static_cast<double>(count);
    if (grad != nullptr) {
      const double scale = weight / pred.n() / static_cast<double>(count);
      for (std::size_t i = base; i < base + plane; ++i) {
        if (!unknown_at(trimap, i)) continue;
        (*grad)[i] += static_cast<T>(scale * 2.0 * (static_cast<double>(pred[i]) - static_cast<double>(gt[i])));
      }
    }
  }
  return total / pred.n();
}

template <typename T>
double laplacian_loss(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* grad, double weight) {
  check_pair(pred, gt, "laplacian_loss");
  check_grad(pred, grad, "laplacian_loss");
  const int h = pred.h();
  const int w = pred.w();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int n = 0; n < pred.n(); ++n) {
    Plane diff(plane);
    const std::size_t base = static_cast<std::size_t>(n) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      diff[i] = static_cast<double>(pred[base + i]) - static_cast<double>(gt[base + i]);
    }
    // The pyramid is linear, so the level differences are the levels of the difference.
    const auto levels = laplacian_pyramid(diff, h, w);
    std::vector<Plane> level_grads(levels.size());
    for (std::size_t s = 0; s < levels.size(); ++s) {
      const double level_weight = std::ldexp(1.0, static_cast<int>(s));
      double sum = 0.0;
      for (double v : levels[s]) sum += std::abs(v);
      const double count = static_cast<double>(levels[s].size());
      total += level_weight * sum / count;
      level_grads[s].resize(levels[s].size());
      for (std::size_t i = 0; i < levels[s].size(); ++i) level_grads[s][i] = level_weight * sign(levels[s][i]) / count;
    }
    if (grad == nullptr) continue;
    // Adjoint sweep: d cur_s = g_s + down^T (d cur_{s+1} - up^T g_s).
    Plane d_current = level_grads.back();
    for (int s = kPyramidLevels - 2; s >= 0; --s) {
      const int ch = h >> s;
      const int cw = w >> s;
      Plane up_t = pyr_up_adjoint(level_grads[s], ch / 2, cw / 2);
      for (std::size_t i = 0; i < up_t.size(); ++i) d_current[i] -= up_t[i];
      Plane back = pyr_down_adjoint(d_current, ch, cw);
      for (std::size_t i = 0; i < back.size(); ++i) back[i] += level_grads[s][i];
      d_current = std::move(back);
    }
    const double scale = weight / pred.n();
    for (std::size_t i = 0; i < plane; ++i) (*grad)[base + i] += static_cast<T>(scale * d_current[i]);
  }
  return total / pred.n();
}

template <typename T>
double gradient_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, Tensor<T>* grad,
                     double weight) {
  check_triple(pred, gt, trimap, "gradient_loss");
  check_grad(pred, grad, "gradient_loss");
  const int h = pred.h();
  const int w = pred.w();
  double total = 0.0;
  for (int n = 0; n < pred.n(); ++n) {
    auto d = [&](int y, int x) {
      return static_cast<double>(pred(n, 0, y, x)) - static_cast<double>(gt(n, 0, y, x));
    };
    double sum = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!is_unknown(static_cast<float>(trimap(n, 0, y, x)))) continue;
        ++count;
        if (x + 1 < w) sum += std::abs(d(y, x + 1) - d(y, x));
        if (y + 1 < h) sum += std::abs(d(y + 1, x) - d(y, x));
      }
    if (count == 0) continue;
    total += sum / static_cast<double>(count);
    if (grad == nullptr) continue;
    const double scale = weight / pred.n() / static_cast<double>(count);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!is_unknown(static_cast<float>(trimap(n, 0, y, x)))) continue;
        if (x + 1 < w) {
          const double s = scale * sign(d(y, x + 1) - d(y, x));
          (*grad)(n, 0, y, x + 1) += static_cast<T>(s);
          (*grad)(n, 0, y, x) -= static_cast<T>(s);
        }
        if (y + 1 < h) {
          const double s = scale * sign(d(y + 1, x) - d(y, x));
          (*grad)(n, 0, y + 1, x) += static_cast<T>(s);
          (*grad)(n, 0, y, x) -= static_cast<T>(s);
        }
      }
  }
  return total / pred.n();
}

template <typename T>
LossBreakdown matting_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap,
                           const LossWeights& weights, Tensor<T>* grad) {
  LossBreakdown out;
  out.sp_l1 = separate_l1(pred, gt, trimap, grad, weights.sp_l1);
  out.l2 = l2_loss(pred, gt, trimap, grad, weights.l2);
  out.lap = laplacian_loss(pred, gt, grad, weights.lap);
  out.grad = gradient_loss(pred, gt, trimap, grad, weights.grad);
  out.total = weights.sp_l1 * out.sp_l1 + weights.l2 * out.l2 + weights.lap * out.lap + weights.grad * out.grad;
  return out;
}

#define DIFFMATTE_INSTANTIATE(T)                                                                              \
  template double separate_l1(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*, double);     \
  template double l2_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*, double);         \
  template double laplacian_loss(const Tensor<T>&, const Tensor<T>&, Tensor<T>*, double);                    \
  template double gradient_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*, double);   \
  template LossBreakdown matting_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossWeights&, \
                                      Tensor<T>*);

DIFFMATTE_INSTANTIATE(float)
DIFFMATTE_INSTANTIATE(double)

#undef DIFFMATTE_INSTANTIATE

}  // namespace diffmatte
