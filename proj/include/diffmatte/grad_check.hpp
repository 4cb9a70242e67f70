#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "diffmatte/model.hpp"

namespace diffmatte {

/// A 64-bit tensor whose analytic gradient has already been accumulated into `grad`.
struct GradTarget {
  std::string name;
  Tensor<double>* value = nullptr;
  const Tensor<double>* grad = nullptr;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  /// Entries probed per tensor; 0 probes every entry. Larger tensors are
  /// subsampled with a seeded generator.
  std::size_t max_entries_per_tensor = 0;
  /// Denominator floor: error = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Compares analytic gradients against central finite differences of `loss`.
/// Every probed entry is restored before returning.
GradCheckReport grad_check(std::span<const GradTarget> targets, const std::function<double()>& loss,
                           const GradCheckOptions& options = {});

/// All parameters of a 64-bit model as grad-check targets.
std::vector<GradTarget> parameter_targets(MattingModelT<double>& model);

}  // namespace diffmatte
