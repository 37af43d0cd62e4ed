#ifndef PSTF_CORE_CHART_HPP
#define PSTF_CORE_CHART_HPP

#include <string>
#include <vector>

#include "pstf/core/image.hpp"

namespace pstf {

// Minimal line-chart rasterizer for similarity curves (one polyline per
// series, shared x grid, auto-scaled y). Good enough for eyeballing trends.
struct ChartSeries {
    std::vector<double> y;
    double r = 0.0, g = 0.0, b = 0.0;
};

Image render_line_chart(const std::vector<double>& x, const std::vector<ChartSeries>& series,
                        int width = 480, int height = 320);

void write_chart_ppm(const std::string& path, const std::vector<double>& x,
                     const std::vector<ChartSeries>& series);

}  // namespace pstf

#endif  // PSTF_CORE_CHART_HPP
