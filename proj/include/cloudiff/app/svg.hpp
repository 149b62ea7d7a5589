#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cloudiff::app {

struct Series {
  std::string label;
  std::vector<std::optional<double>> y;  // gaps where nullopt
};

/// Minimal line chart: shared x values, y in [0, 1].
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::vector<double>& x, const std::vector<Series>& series);

}  // namespace cloudiff::app
