#pragma once

#include <string>
#include <vector>

namespace diffmatte::cli {

struct Series {
  std::string label;
  std::vector<double> y;  // NaN entries are skipped
};

/// Self-contained SVG line chart. x positions are categorical (tick labels);
/// output depends only on the arguments.
std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<std::string>& ticks, const std::vector<Series>& series);

}  // namespace diffmatte::cli
