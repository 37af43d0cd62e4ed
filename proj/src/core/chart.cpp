#include "pstf/core/chart.hpp"

#include <algorithm>
#include <cmath>

#include "pstf/core/errors.hpp"

namespace pstf {

namespace {

void put(Image& img, int x, int y, double r, double g, double b) {
    if (x < 0 || x >= img.width || y < 0 || y >= img.height) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
}

void line(Image& img, double x0, double y0, double x1, double y1, double r, double g, double b) {
    const int steps = (int)std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
    for (int i = 0; i <= steps; ++i) {
        const double t = (double)i / steps;
        put(img, (int)std::lround(x0 + t * (x1 - x0)), (int)std::lround(y0 + t * (y1 - y0)), r, g,
            b);
    }
}

}  // namespace

Image render_line_chart(const std::vector<double>& x, const std::vector<ChartSeries>& series,
                        int width, int height) {
    if (x.size() < 2) throw UsageError("chart needs at least two x points");
    Image img(height, width);
    for (auto& v : img.pixels) v = 1.0;

    const int ml = 40, mr = 12, mt = 12, mb = 28;  // margins
    const double px0 = ml, px1 = width - mr, py0 = height - mb, py1 = mt;

    double ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        if (s.y.size() != x.size()) throw UsageError("chart series length mismatch");
        for (double v : s.y) {
            ymin = std::min(ymin, v);
            ymax = std::max(ymax, v);
        }
    }
    if (!(ymax > ymin)) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    const double pad = 0.05 * (ymax - ymin);
    ymin -= pad;
    ymax += pad;

    auto sx = [&](double v) { return px0 + (v - x.front()) / (x.back() - x.front()) * (px1 - px0); };
    auto sy = [&](double v) { return py0 - (v - ymin) / (ymax - ymin) * (py0 - py1); };

    // axes + light grid
    line(img, px0, py0, px1, py0, 0, 0, 0);
    line(img, px0, py0, px0, py1, 0, 0, 0);
    for (int i = 1; i <= 4; ++i) {
        const double gy = py0 + (py1 - py0) * i / 4.0;
        line(img, px0, gy, px1, gy, 0.85, 0.85, 0.85);
    }
    for (double xv : x) line(img, sx(xv), py0, sx(xv), py0 + 3, 0, 0, 0);

    for (const auto& s : series) {
        for (size_t i = 0; i + 1 < x.size(); ++i)
            line(img, sx(x[i]), sy(s.y[i]), sx(x[i + 1]), sy(s.y[i + 1]), s.r, s.g, s.b);
        for (size_t i = 0; i < x.size(); ++i) {
            const int cx = (int)std::lround(sx(x[i])), cy = (int)std::lround(sy(s.y[i]));
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) put(img, cx + dx, cy + dy, s.r, s.g, s.b);
        }
    }
    return img;
}

void write_chart_ppm(const std::string& path, const std::vector<double>& x,
                     const std::vector<ChartSeries>& series) {
    write_ppm(render_line_chart(x, series), path);
}

}  // namespace pstf
