#include "diffmatte/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "diffmatte/errors.hpp"

namespace diffmatte {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void require_unit_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time " + std::to_string(t) + " outside [0, 1]");
}

}  // namespace

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Cosine: return "cosine";
    case ScheduleKind::Sigmoid: return "sigmoid";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view text) {
  if (text == "linear") return ScheduleKind::Linear;
  if (text == "cosine") return ScheduleKind::Cosine;
  if (text == "sigmoid") return ScheduleKind::Sigmoid;
  throw DomainError("unknown schedule '" + std::string(text) + "' (expected linear|cosine|sigmoid)");
}

void ScheduleSpec::validate() const {
  if (!(input_scale > 0.0 && input_scale <= 1.0)) {
    throw DomainError("input scale " + std::to_string(input_scale) + " outside (0, 1]");
  }
  if (!(sigmoid_end > sigmoid_start)) throw DomainError("sigmoid_end must exceed sigmoid_start");
  if (!(sigmoid_tau > 0.0)) throw DomainError("sigmoid_tau must be positive");
}

double gamma(const ScheduleSpec& spec, double t) {
  require_unit_time(t);
  if (t == 0.0) return 1.0;
  if (t == 1.0) return 0.0;
  switch (spec.kind) {
    case ScheduleKind::Linear:
      return 1.0 - t;
    case ScheduleKind::Cosine: {
      const double c = std::cos(std::numbers::pi * t / 2.0);
      return c * c;
    }
    case ScheduleKind::Sigmoid: {
      const double s = spec.sigmoid_start;
      const double e = spec.sigmoid_end;
      const double tau = spec.sigmoid_tau;
      const double lo = logistic(-e / tau);
      const double hi = logistic(-s / tau);
      const double v = logistic(-(t * (e - s) + s) / tau);
      return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    }
  }
  return 0.0;
}

double snr(const ScheduleSpec& spec, double t) {
  const double g = gamma(spec, t);
  if (g >= 1.0) return std::numeric_limits<double>::infinity();
  const double b = spec.input_scale;
  return g * b * b / (1.0 - g);
}

TimeGrid make_time_grid(int steps) {
  if (steps < 1) throw DomainError("step count must be >= 1, got " + std::to_string(steps));
  TimeGrid grid;
  grid.steps.reserve(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    grid.steps.push_back(static_cast<double>(steps - i) / static_cast<double>(steps));
  }
  return grid;
}

}  // namespace diffmatte
