#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace diffmatte {

enum class ScheduleKind { Linear, Cosine, Sigmoid };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view text);

/// Noise schedule gamma(t) plus the input scaling b applied to clean mattes.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::Linear;
  double input_scale = 0.2;
  double sigmoid_start = -3.0;
  double sigmoid_end = 3.0;
  double sigmoid_tau = 1.0;

  /// Throws DomainError if b is outside (0, 1] or the sigmoid parameters are degenerate.
  void validate() const;
  bool operator==(const ScheduleSpec&) const = default;
};

/// Signal intensity at unit time t: 1 at t = 0 (clean), 0 at t = 1 (pure noise),
/// monotone non-increasing in between.
double gamma(const ScheduleSpec& spec, double t);

/// gamma * b^2 / (1 - gamma); +infinity at t = 0.
double snr(const ScheduleSpec& spec, double t);

/// Reverse-process time points, strictly decreasing from 1 to 0.
struct TimeGrid {
  std::vector<double> steps;

  int step_count() const { return static_cast<int>(steps.size()) - 1; }
};

/// Uniform grid t_i = (T - i) / T for i = 0..T.
TimeGrid make_time_grid(int steps);

}  // namespace diffmatte
