#pragma once

#include <vector>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

/// Matting errors over the trimap's unknown region, in the customary reporting units.
struct MetricReport {
  double sad = 0.0;   // sum |d| / 1000
  double mse = 0.0;   // mean d^2 * 1000
  double grad = 0.0;  // sum of squared gradient-magnitude differences / 1000
  double conn = 0.0;  // sum of connectivity-degree differences / 1000
};

// Inputs are [N, 1, H, W] with identical shapes; sums run over every sample.

template <typename T>
double sad(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap);

/// Throws DomainError when there are no unknown pixels.
template <typename T>
double mse(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap);

inline constexpr double kGradSigma = 1.4;

template <typename T>
double grad_metric(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, double sigma = kGradSigma);

inline constexpr double kConnStep = 0.1;
inline constexpr double kConnFloor = 0.15;

template <typename T>
double conn_metric(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, double step = kConnStep);

template <typename T>
MetricReport evaluate(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap);

/// Separable Gaussian-derivative kernels: value g(y) * g'(x) for the x-derivative,
/// L2-normalised, truncated at ceil(3 sigma). Returned as rows of a (2r+1)^2 grid.
std::vector<double> gaussian_derivative_kernel(double sigma, int* radius);

/// Gradient magnitude of one H x W plane (replicated borders).
std::vector<double> gradient_magnitude(const std::vector<double>& plane, int h, int w, double sigma);

/// Mask of the largest 4-connected component; ties go to the component met first in raster order.
std::vector<bool> largest_component(const std::vector<bool>& mask, int h, int w);

}  // namespace diffmatte
