#include "diffmatte/metrics.hpp"

#include <cmath>
#include <deque>

#include "diffmatte/trimap.hpp"

namespace diffmatte {

namespace {

template <typename T>
void check_inputs(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, const char* what) {
  pred.require_same_shape(gt, what);
  pred.require_same_shape(trimap, what);
  if (pred.c() != 1) throw DomainError(std::string(what) + ": expected single-channel mattes");
}

template <typename T>
bool unknown_at(const Tensor<T>& trimap, std::size_t i) {
  return is_unknown(static_cast<float>(trimap[i]));
}

template <typename T>
std::vector<double> plane_of(const Tensor<T>& t, int n) {
  const T* p = t.plane(n, 0);
  return std::vector<double>(p, p + static_cast<std::size_t>(t.h()) * t.w());
}

int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

/// Correlates along rows (horizontal = true) or columns with a 1-D kernel of radius r.
std::vector<double> filter_1d(const std::vector<double>& src, int h, int w, const std::vector<double>& k, int r,
                              bool horizontal) {
  std::vector<double> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int j = -r; j <= r; ++j) {
        const int sy = horizontal ? y : clamp_index(y + j, h);
        const int sx = horizontal ? clamp_index(x + j, w) : x;
        acc += k[static_cast<std::size_t>(j + r)] * src[static_cast<std::size_t>(sy) * w + sx];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

void gaussian_pair(double sigma, int r, std::vector<double>& g, std::vector<double>& dg) {
  g.assign(2 * r + 1, 0.0);
  dg.assign(2 * r + 1, 0.0);
  for (int i = -r; i <= r; ++i) {
    const double e = std::exp(-0.5 * i * i / (sigma * sigma));
    g[static_cast<std::size_t>(i + r)] = e;
    dg[static_cast<std::size_t>(i + r)] = -i * e / (sigma * sigma);
  }
  auto normalise = [](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    for (double& x : v) x /= s;
  };
  normalise(g);
  normalise(dg);
}

int radius_for(double sigma) {
  if (!(sigma > 0.0)) throw DomainError("grad_metric: sigma must be positive");
  return static_cast<int>(std::ceil(3.0 * sigma));
}

/// Connectivity degree map of one matte against the shared threshold levels.
std::vector<double> connectivity_phi(const std::vector<double>& alpha, const std::vector<double>& levels) {
  std::vector<double> phi(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double d = alpha[i] - levels[i];
    phi[i] = 1.0 - (d >= kConnFloor ? d : 0.0);
  }
  return phi;
}

}  // namespace

std::vector<double> gaussian_derivative_kernel(double sigma, int* radius) {
  const int r = radius_for(sigma);
  std::vector<double> g, dg;
  gaussian_pair(sigma, r, g, dg);
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1) * (2 * r + 1));
  for (int y = 0; y <= 2 * r; ++y)
    for (int x = 0; x <= 2 * r; ++x) k[static_cast<std::size_t>(y) * (2 * r + 1) + x] = g[y] * dg[x];
  if (radius) *radius = r;
  return k;
}

std::vector<double> gradient_magnitude(const std::vector<double>& plane, int h, int w, double sigma) {
  const int r = radius_for(sigma);
  std::vector<double> g, dg;
  gaussian_pair(sigma, r, g, dg);
  const auto gx = filter_1d(filter_1d(plane, h, w, dg, r, true), h, w, g, r, false);
  const auto gy = filter_1d(filter_1d(plane, h, w, g, r, true), h, w, dg, r, false);
  std::vector<double> mag(plane.size());
  for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  return mag;
}

std::vector<bool> largest_component(const std::vector<bool>& mask, int h, int w) {
  std::vector<int> label(mask.size(), -1);
  int best = -1;
  std::size_t best_size = 0;
  int next = 0;
  std::deque<int> queue;
  for (int start = 0; start < h * w; ++start) {
    if (!mask[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = next++;
    std::size_t size = 0;
    label[static_cast<std::size_t>(start)] = id;
    queue.push_back(start);
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      ++size;
      const int y = p / w;
      const int x = p % w;
      const int nbr[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& q : nbr) {
        if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
        const auto k = static_cast<std::size_t>(q[0]) * w + q[1];
        if (mask[k] && label[k] < 0) {
          label[k] = id;
          queue.push_back(static_cast<int>(k));
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = id;
    }
  }
  std::vector<bool> out(mask.size(), false);
  if (best < 0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = label[i] == best;
  return out;
}

template <typename T>
double sad(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap) {
  check_inputs(pred, gt, trimap, "sad");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (unknown_at(trimap, i)) sum += std::abs(static_cast<double>(pred[i]) - static_cast<double>(gt[i]));
  }
  return sum / 1000.0;
}

template <typename T>
double mse(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap) {
  check_inputs(pred, gt, trimap, "mse");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!unknown_at(trimap, i)) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    sum += d * d;
    ++count;
  }
  if (count == 0) throw DomainError("mse: trimap has no unknown pixels");
  return sum / static_cast<double>(count) * 1000.0;
}

template <typename T>
double grad_metric(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, double sigma) {
  check_inputs(pred, gt, trimap, "grad_metric");
  const int h = pred.h();
  const int w = pred.w();
  double sum = 0.0;
  for (int n = 0; n < pred.n(); ++n) {
    const auto mp = gradient_magnitude(plane_of(pred, n), h, w, sigma);
    const auto mg = gradient_magnitude(plane_of(gt, n), h, w, sigma);
    const T* tri = trimap.plane(n, 0);
    for (std::size_t i = 0; i < mp.size(); ++i) {
      if (!is_unknown(static_cast<float>(tri[i]))) continue;
      const double d = mp[i] - mg[i];
      sum += d * d;
    }
  }
  return sum / 1000.0;
}

template <typename T>
double conn_metric(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, double step) {
  check_inputs(pred, gt, trimap, "conn_metric");
  if (!(step > 0.0 && step <= 1.0)) throw DomainError("conn_metric: step must lie in (0, 1]");
  const int h = pred.h();
  const int w = pred.w();
  const int count = static_cast<int>(std::floor(1.0 / step + 1e-9));
  double sum = 0.0;
  for (int n = 0; n < pred.n(); ++n) {
    const auto p = plane_of(pred, n);
    const auto g = plane_of(gt, n);
    std::vector<double> levels(p.size(), -1.0);
    for (int i = 1; i <= count; ++i) {
      const double theta = i * step;
      std::vector<bool> both(p.size());
      for (std::size_t k = 0; k < p.size(); ++k) both[k] = p[k] >= theta && g[k] >= theta;
      const auto omega = largest_component(both, h, w);
      for (std::size_t k = 0; k < p.size(); ++k) {
        if (levels[k] == -1.0 && !omega[k]) levels[k] = (i - 1) * step;
      }
    }
    for (double& l : levels) {
      if (l == -1.0) l = 1.0;
    }
    const auto phi_p = connectivity_phi(p, levels);
    const auto phi_g = connectivity_phi(g, levels);
    const T* tri = trimap.plane(n, 0);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (is_unknown(static_cast<float>(tri[k]))) sum += std::abs(phi_p[k] - phi_g[k]);
    }
  }
  return sum / 1000.0;
}

template <typename T>
MetricReport evaluate(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap) {
  MetricReport r;
  r.sad = sad(pred, gt, trimap);
  r.mse = mse(pred, gt, trimap);
  r.grad = grad_metric(pred, gt, trimap);
  r.conn = conn_metric(pred, gt, trimap);
  return r;
}

#define DIFFMATTE_METRICS(T)                                                                      \
  template double sad<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template double mse<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template double grad_metric<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);   \
  template double conn_metric<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);   \
  template MetricReport evaluate<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

DIFFMATTE_METRICS(float)
DIFFMATTE_METRICS(double)

#undef DIFFMATTE_METRICS

}  // namespace diffmatte
