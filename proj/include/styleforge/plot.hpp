#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "styleforge/core.hpp"

namespace styleforge::plot {

struct ScatterPoint {
    double x = 0.0;
    double y = 0.0;
    std::string series; // one marker color per distinct series, first-appearance order
};

// Deterministic SVG output: fixed viewport, numbers via format_double, no
// timestamps. The CSV written next to a plot is the contract; the SVG is
// best-effort visualization.
void write_scatter_svg(const std::filesystem::path& path, const std::vector<ScatterPoint>& points,
                       const std::string& x_label, const std::string& y_label);

void write_heatmap_svg(const std::filesystem::path& path, const Matrix& values,
                       const std::vector<std::string>& row_names,
                       const std::vector<std::string>& col_names);

} // namespace styleforge::plot
