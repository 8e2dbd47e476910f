#include "styleforge/plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace styleforge::plot {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 480;
constexpr int kMargin = 56;

const char* kSeriesColors[] = {"#1f6fb2", "#d1495b", "#3a7d44", "#8d6a9f",
                               "#c77d2e", "#2a9d8f", "#6c757d", "#b5179e"};

std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    return format_double(v);
}

} // namespace

void write_scatter_svg(const std::filesystem::path& path, const std::vector<ScatterPoint>& points,
                       const std::string& x_label, const std::string& y_label) {
    if (points.empty()) throw ValidationError("scatter plot: no points");
    double xmin = points[0].x, xmax = points[0].x, ymin = points[0].y, ymax = points[0].y;
    for (const auto& p : points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
    }
    if (xmax == xmin) {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if (ymax == ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    auto sx = [&](double x) { return kMargin + (x - xmin) / (xmax - xmin) * (kWidth - 2 * kMargin); };
    auto sy = [&](double y) { return kHeight - kMargin - (y - ymin) / (ymax - ymin) * (kHeight - 2 * kMargin); };

    std::map<std::string, size_t> series_index;
    std::vector<std::string> series_order;

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
           "\" height=\"" + std::to_string(kHeight) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    // axes
    svg += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kHeight - kMargin) + "\" x2=\"" +
           num(kWidth - kMargin) + "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + num(kMargin) + "\" y1=\"" + num(kMargin) + "\" x2=\"" + num(kMargin) +
           "\" y2=\"" + num(kHeight - kMargin) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + num(kWidth / 2.0) + "\" y=\"" + num(kHeight - 12.0) +
           "\" text-anchor=\"middle\" font-size=\"13\">" + svg_escape(x_label) + "</text>\n";
    svg += "<text x=\"16\" y=\"" + num(kHeight / 2.0) +
           "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
           num(kHeight / 2.0) + ")\">" + svg_escape(y_label) + "</text>\n";
    // range annotations
    svg += "<text x=\"" + num(kMargin) + "\" y=\"" + num(kHeight - kMargin + 16.0) +
           "\" font-size=\"11\">" + num(xmin) + "</text>\n";
    svg += "<text x=\"" + num(kWidth - kMargin) + "\" y=\"" + num(kHeight - kMargin + 16.0) +
           "\" text-anchor=\"end\" font-size=\"11\">" + num(xmax) + "</text>\n";
    svg += "<text x=\"" + num(kMargin - 4.0) + "\" y=\"" + num(kHeight - kMargin) +
           "\" text-anchor=\"end\" font-size=\"11\">" + num(ymin) + "</text>\n";
    svg += "<text x=\"" + num(kMargin - 4.0) + "\" y=\"" + num(kMargin + 4.0) +
           "\" text-anchor=\"end\" font-size=\"11\">" + num(ymax) + "</text>\n";

    for (const auto& p : points) {
        auto [it, inserted] = series_index.emplace(p.series, series_order.size());
        if (inserted) series_order.push_back(p.series);
        const char* color = kSeriesColors[it->second % std::size(kSeriesColors)];
        svg += "<circle cx=\"" + num(sx(p.x)) + "\" cy=\"" + num(sy(p.y)) +
               "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }

    // legend
    double ly = kMargin;
    for (size_t i = 0; i < series_order.size(); ++i) {
        if (series_order[i].empty()) continue;
        const char* color = kSeriesColors[i % std::size(kSeriesColors)];
        svg += "<circle cx=\"" + num(kWidth - kMargin - 90.0) + "\" cy=\"" + num(ly) +
               "\" r=\"4\" fill=\"" + color + "\"/>\n";
        svg += "<text x=\"" + num(kWidth - kMargin - 80.0) + "\" y=\"" + num(ly + 4.0) +
               "\" font-size=\"12\">" + svg_escape(series_order[i]) + "</text>\n";
        ly += 18.0;
    }
    svg += "</svg>\n";
    write_file_bytes(path, svg);
}

void write_heatmap_svg(const std::filesystem::path& path, const Matrix& values,
                       const std::vector<std::string>& row_names,
                       const std::vector<std::string>& col_names) {
    if (values.rows == 0 || values.cols == 0) throw ValidationError("heatmap: empty matrix");
    if (row_names.size() != values.rows || col_names.size() != values.cols) {
        throw ValidationError("heatmap: name/matrix size mismatch");
    }
    double vmax = 0.0;
    for (double v : values.data) vmax = std::max(vmax, v);
    if (vmax <= 0.0) vmax = 1.0;

    const double cell = std::min(48.0, (kWidth - 2.0 * kMargin) / static_cast<double>(values.cols));
    const double x0 = kMargin + 60.0, y0 = kMargin;

    std::string svg;
    const double total_w = x0 + cell * values.cols + kMargin;
    const double total_h = y0 + cell * values.rows + kMargin + 40.0;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(total_w) + "\" height=\"" +
           num(total_h) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (size_t r = 0; r < values.rows; ++r) {
        for (size_t c = 0; c < values.cols; ++c) {
            const double t = values(r, c) / vmax;
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - t)));
            svg += "<rect x=\"" + num(x0 + cell * c) + "\" y=\"" + num(y0 + cell * r) +
                   "\" width=\"" + num(cell) + "\" height=\"" + num(cell) + "\" fill=\"rgb(" +
                   std::to_string(shade) + "," + std::to_string(shade) + ",255)\" stroke=\"#ccc\"/>\n";
            svg += "<text x=\"" + num(x0 + cell * c + cell / 2) + "\" y=\"" +
                   num(y0 + cell * r + cell / 2 + 4) + "\" text-anchor=\"middle\" font-size=\"11\">" +
                   num(values(r, c)) + "</text>\n";
        }
    }
    for (size_t r = 0; r < values.rows; ++r) {
        svg += "<text x=\"" + num(x0 - 6.0) + "\" y=\"" + num(y0 + cell * r + cell / 2 + 4) +
               "\" text-anchor=\"end\" font-size=\"11\">" + svg_escape(row_names[r]) + "</text>\n";
    }
    for (size_t c = 0; c < values.cols; ++c) {
        svg += "<text x=\"" + num(x0 + cell * c + cell / 2) + "\" y=\"" +
               num(y0 + cell * values.rows + 16.0) + "\" text-anchor=\"middle\" font-size=\"11\">" +
               svg_escape(col_names[c]) + "</text>\n";
    }
    svg += "</svg>\n";
    write_file_bytes(path, svg);
}

} // namespace styleforge::plot
