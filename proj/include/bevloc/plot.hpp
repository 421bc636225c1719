#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "bevloc/image.hpp"

namespace bevloc::plot {

struct BarGroup {
  std::string label;
  std::vector<double> values;  // one bar per series
};

// Grouped bar chart with values in [0, 1] (e.g. AP); numeric value stamps are
// drawn above the bars with a tiny built-in digit font.
void WriteBarChart(const std::filesystem::path& path, const std::vector<BarGroup>& groups,
                   int width = 560, int height = 360);

// Single polyline over (x, y) with y in [0, 1]; used for top-k sweeps.
void WriteLineChart(const std::filesystem::path& path, const std::vector<double>& xs,
                    const std::vector<double>& ys, int width = 560, int height = 360);

}  // namespace bevloc::plot
