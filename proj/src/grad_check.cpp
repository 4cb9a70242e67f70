#include "diffmatte/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace diffmatte {

GradCheckReport grad_check(std::span<const GradTarget> targets, const std::function<double()>& loss,
                           const GradCheckOptions& options) {
  GradCheckReport report;
  Rng rng(options.seed);
  for (const auto& target : targets) {
    Tensor<double>& v = *target.value;
    const Tensor<double>& g = *target.grad;
    v.require_same_shape(g, "grad_check");
    std::vector<std::size_t> probe(v.size());
    std::iota(probe.begin(), probe.end(), std::size_t{0});
    if (options.max_entries_per_tensor != 0 && probe.size() > options.max_entries_per_tensor) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(options.max_entries_per_tensor);
    }
    for (std::size_t i : probe) {
      const double saved = v[i];
      v[i] = saved + options.epsilon;
      const double up = loss();
      v[i] = saved - options.epsilon;
      const double down = loss();
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double analytic = g[i];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), options.floor});
      const double err = std::abs(numeric - analytic) / denom;
      ++report.checked;
      if (err > report.max_rel_error || !std::isfinite(err)) {
        report.max_rel_error = std::isfinite(err) ? err : INFINITY;
        report.worst = target.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return report;
}

std::vector<GradTarget> parameter_targets(MattingModelT<double>& model) {
  std::vector<GradTarget> out;
  model.visit([&](const std::string& name, Tensor<double>& v, Tensor<double>& g) {
    out.push_back({name, &v, &g});
  });
  return out;
}

}  // namespace diffmatte
