#pragma once

#include <vector>

#include "diffmatte/tensor.hpp"

namespace diffmatte {

struct LossWeights {
  double sp_l1 = 1.0;
  double l2 = 1.0;
  double lap = 1.0;
  double grad = 1.0;

  bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
  double sp_l1 = 0.0;
  double l2 = 0.0;
  double lap = 0.0;
  double grad = 0.0;
  double total = 0.0;  // weighted sum of the four components
};

// All losses take [N, 1, H, W] batches, return the mean over the batch and,
// when `grad` is non-null, add `weight` * dLoss/dPred into it.

/// Mean |pred - gt| over unknown pixels plus mean |pred - gt| over known pixels.
template <typename T>
double separate_l1(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, Tensor<T>* grad = nullptr,
                   double weight = 1.0);

/// Mean squared error over unknown pixels (0 when there are none).
template <typename T>
double l2_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, Tensor<T>* grad = nullptr,
               double weight = 1.0);

/// Five-level Laplacian pyramid L1, level s weighted by 2^(s-1). Extents must be divisible by 16.
template <typename T>
double laplacian_loss(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>* grad = nullptr, double weight = 1.0);

/// Forward-difference gradient L1 over unknown pixels; last row/column differences are zero.
template <typename T>
double gradient_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap, Tensor<T>* grad = nullptr,
                     double weight = 1.0);

template <typename T>
LossBreakdown matting_loss(const Tensor<T>& pred, const Tensor<T>& gt, const Tensor<T>& trimap,
                           const LossWeights& weights = {}, Tensor<T>* grad = nullptr);

inline constexpr int kPyramidLevels = 5;

/// Laplacian pyramid of one H x W plane: four band-pass levels then the coarse residual.
/// Uses the (1,4,6,4,1)/16 binomial kernel with mirror padding.
std::vector<std::vector<double>> laplacian_pyramid(const std::vector<double>& plane, int h, int w);

/// Collapses a pyramid back to the full-resolution plane.
std::vector<double> reconstruct_pyramid(const std::vector<std::vector<double>>& pyramid, int h, int w);

}  // namespace diffmatte
