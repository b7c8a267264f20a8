#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gflow/csv.hpp"

namespace gflow {

/// Minimal deterministic SVG canvas. Output bytes depend only on the calls
/// made, so plots are diffable and testable.
class SvgCanvas {
  public:
    SvgCanvas(double width, double height) : width_(width), height_(height) {
        body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << format_double(width)
              << "\" height=\"" << format_double(height) << "\" viewBox=\"0 0 "
              << format_double(width) << ' ' << format_double(height) << "\">\n";
        body_ << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& color,
              double stroke_width = 1.0, const std::string& dash = "") {
        body_ << "<line x1=\"" << format_double(x1) << "\" y1=\"" << format_double(y1)
              << "\" x2=\"" << format_double(x2) << "\" y2=\"" << format_double(y2)
              << "\" stroke=\"" << color << "\" stroke-width=\"" << format_double(stroke_width) << '"';
        if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << '"';
        body_ << "/>\n";
    }

    void circle(double cx, double cy, double r, const std::string& color, double opacity = 1.0) {
        body_ << "<circle cx=\"" << format_double(cx) << "\" cy=\"" << format_double(cy)
              << "\" r=\"" << format_double(r) << "\" fill=\"" << color << '"';
        if (opacity != 1.0) body_ << " fill-opacity=\"" << format_double(opacity) << '"';
        body_ << "/>\n";
    }

    void rect(double x, double y, double w, double h, const std::string& color, double opacity = 1.0) {
        body_ << "<rect x=\"" << format_double(x) << "\" y=\"" << format_double(y)
              << "\" width=\"" << format_double(w) << "\" height=\"" << format_double(h)
              << "\" fill=\"" << color << '"';
        if (opacity != 1.0) body_ << " fill-opacity=\"" << format_double(opacity) << '"';
        body_ << "/>\n";
    }

    void text(double x, double y, const std::string& content, double size = 12.0,
              const std::string& anchor = "start", const std::string& color = "black") {
        body_ << "<text x=\"" << format_double(x) << "\" y=\"" << format_double(y)
              << "\" font-size=\"" << format_double(size) << "\" font-family=\"monospace\" text-anchor=\""
              << anchor << "\" fill=\"" << color << "\">" << content << "</text>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& points, const std::string& color,
                  double stroke_width = 1.5, const std::string& dash = "") {
        body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
              << format_double(stroke_width) << '"';
        if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << '"';
        body_ << " points=\"";
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (i) body_ << ' ';
            body_ << format_double(points[i].first) << ',' << format_double(points[i].second);
        }
        body_ << "\"/>\n";
    }

    std::string finish() {
        body_ << "</svg>\n";
        return body_.str();
    }

    double width() const { return width_; }
    double height() const { return height_; }

  private:
    double width_, height_;
    std::ostringstream body_;
};

/// Log-log scatter with optional overlay lines; used for the scaling plots.
class LogLogPlot {
  public:
    LogLogPlot(std::string title, std::string x_label, std::string y_label)
        : title_(std::move(title)), x_label_(std::move(x_label)), y_label_(std::move(y_label)) {}

    void add_point(double x, double y, const std::string& color) { points_.push_back({x, y, color}); }

    void add_line(std::vector<std::pair<double, double>> xy, const std::string& color,
                  const std::string& dash, std::string label) {
        lines_.push_back(Line{std::move(xy), color, dash, std::move(label)});
    }

    std::string render(double width = 640, double height = 480) const {
        double lo_x = 1e308, hi_x = -1e308, lo_y = 1e308, hi_y = -1e308;
        auto grow = [&](double x, double y) {
            if (x > 0 && y > 0) {
                lo_x = std::min(lo_x, x);
                hi_x = std::max(hi_x, x);
                lo_y = std::min(lo_y, y);
                hi_y = std::max(hi_y, y);
            }
        };
        for (const auto& p : points_) grow(p.x, p.y);
        for (const auto& l : lines_)
            for (auto [x, y] : l.xy) grow(x, y);
        if (lo_x > hi_x || lo_y > hi_y) {
            lo_x = lo_y = 1.0;
            hi_x = hi_y = 10.0;
        }
        double mx = std::log10(hi_x / lo_x) * 0.05 + 0.02;
        double my = std::log10(hi_y / lo_y) * 0.05 + 0.02;
        double lx0 = std::log10(lo_x) - mx, lx1 = std::log10(hi_x) + mx;
        double ly0 = std::log10(lo_y) - my, ly1 = std::log10(hi_y) + my;
        const double left = 70, right = 20, top = 36, bottom = 48;
        double pw = width - left - right, ph = height - top - bottom;
        auto sx = [&](double x) { return left + (std::log10(x) - lx0) / (lx1 - lx0) * pw; };
        auto sy = [&](double y) { return top + (ly1 - std::log10(y)) / (ly1 - ly0) * ph; };

        SvgCanvas svg(width, height);
        svg.line(left, top, left, top + ph, "black");
        svg.line(left, top + ph, left + pw, top + ph, "black");
        svg.text(width / 2, 20, title_, 13, "middle");
        svg.text(width / 2, height - 10, x_label_, 12, "middle");
        svg.text(14, top - 10, y_label_, 12, "start");
        for (int e = static_cast<int>(std::floor(lx0)); e <= static_cast<int>(std::ceil(lx1)); ++e) {
            double v = std::pow(10.0, e);
            if (std::log10(v) < lx0 || std::log10(v) > lx1) continue;
            svg.line(sx(v), top + ph, sx(v), top + ph + 4, "black");
            svg.text(sx(v), top + ph + 18, "1e" + std::to_string(e), 10, "middle");
        }
        for (int e = static_cast<int>(std::floor(ly0)); e <= static_cast<int>(std::ceil(ly1)); ++e) {
            double v = std::pow(10.0, e);
            if (std::log10(v) < ly0 || std::log10(v) > ly1) continue;
            svg.line(left - 4, sy(v), left, sy(v), "black");
            svg.text(left - 8, sy(v) + 3, "1e" + std::to_string(e), 10, "end");
        }
        double legend_y = top + 12;
        for (const auto& l : lines_) {
            std::vector<std::pair<double, double>> path;
            for (auto [x, y] : l.xy)
                if (x > 0 && y > 0) path.emplace_back(sx(x), sy(y));
            svg.polyline(path, l.color, 1.5, l.dash);
            if (!l.label.empty()) {
                svg.line(left + pw - 150, legend_y - 4, left + pw - 130, legend_y - 4, l.color, 2, l.dash);
                svg.text(left + pw - 124, legend_y, l.label, 10);
                legend_y += 14;
            }
        }
        for (const auto& p : points_)
            if (p.x > 0 && p.y > 0) svg.circle(sx(p.x), sy(p.y), 2.5, p.color, 0.6);
        return svg.finish();
    }

  private:
    struct Point {
        double x, y;
        std::string color;
    };
    struct Line {
        std::vector<std::pair<double, double>> xy;
        std::string color;
        std::string dash;
        std::string label;
    };
    std::string title_, x_label_, y_label_;
    std::vector<Point> points_;
    std::vector<Line> lines_;
};

}  // namespace gflow
