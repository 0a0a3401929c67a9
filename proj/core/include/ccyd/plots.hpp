#pragma once

#include <string>
#include <utility>
#include <vector>

namespace ccyd {

// Line plot on fixed [0,1]² axes, written as a standalone SVG.
void write_curve_svg(const std::string& path, const std::vector<std::pair<double, double>>& pts,
                     const std::string& xlabel, const std::string& ylabel,
                     const std::string& title);

}  // namespace ccyd
