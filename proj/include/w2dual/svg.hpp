#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "w2dual/common.hpp"

namespace w2dual {

namespace detail {

inline std::string svg_num(double v) {
    std::ostringstream os;
    os << std::setprecision(8) << v;
    return os.str();
}

/// Linear blend of two "#rrggbb" colors; t is clamped to [0, 1].
inline std::string color_lerp(const std::string& a, const std::string& b, double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto chan = [&](std::size_t off) {
        const int ca = std::stoi(a.substr(off, 2), nullptr, 16);
        const int cb = std::stoi(b.substr(off, 2), nullptr, 16);
        return static_cast<int>(std::lround(ca + t * (cb - ca)));
    };
    std::ostringstream os;
    os << '#' << std::hex << std::setfill('0') << std::setw(2) << chan(1) << std::setw(2)
       << chan(3) << std::setw(2) << chan(5);
    return os.str();
}

/// Three-stop blue -> pale yellow -> red map for scalar fields.
inline std::string heat_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t < 0.5 ? color_lerp("#2c7bb6", "#ffffbf", 2.0 * t)
                   : color_lerp("#ffffbf", "#d7191c", 2.0 * t - 1.0);
}

}  // namespace detail

/// Scatter/heatmap/polyline canvas mapping a data rectangle onto pixels.
/// Data y grows upward; the emitted SVG flips it into screen coordinates.
class SvgCanvas {
public:
    SvgCanvas(double x_lo, double x_hi, double y_lo, double y_hi, int width_px = 640,
              int height_px = 640, int margin_px = 32)
        : x_lo_(x_lo), x_hi_(x_hi), y_lo_(y_lo), y_hi_(y_hi), w_(width_px), h_(height_px),
          margin_(margin_px) {
        if (!(x_hi > x_lo) || !(y_hi > y_lo))
            throw ConfigError("SvgCanvas: data bounds must have positive extent");
        if (width_px <= 2 * margin_px || height_px <= 2 * margin_px)
            throw ConfigError("SvgCanvas: pixel size too small for the margin");
    }

    double px(double x) const {
        return margin_ + (x - x_lo_) / (x_hi_ - x_lo_) * (w_ - 2.0 * margin_);
    }
    double py(double y) const {
        return margin_ + (y_hi_ - y) / (y_hi_ - y_lo_) * (h_ - 2.0 * margin_);
    }

    /// One <circle> per finite row of pts (n x 2).
    void add_points(const Eigen::Ref<const Batch>& pts, double radius, const std::string& color,
                    double opacity = 0.75) {
        if (pts.cols() != 2)
            throw DimensionError("SvgCanvas::add_points: expected n x 2 points, got cols = " +
                                 std::to_string(pts.cols()));
        for (Eigen::Index i = 0; i < pts.rows(); ++i) {
            const double x = pts(i, 0), y = pts(i, 1);
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            body_ << "<circle cx=\"" << detail::svg_num(px(x)) << "\" cy=\""
                  << detail::svg_num(py(y)) << "\" r=\"" << detail::svg_num(radius)
                  << "\" fill=\"" << color << "\" fill-opacity=\"" << detail::svg_num(opacity)
                  << "\"/>\n";
        }
    }

    void add_polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                      const std::string& color, double stroke_width = 1.5) {
        if (xs.size() != ys.size())
            throw DimensionError("SvgCanvas::add_polyline: xs and ys differ in length");
        if (xs.empty()) return;
        body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
              << detail::svg_num(stroke_width) << "\" points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
            body_ << detail::svg_num(px(xs[i])) << ',' << detail::svg_num(py(ys[i])) << ' ';
        }
        body_ << "\"/>\n";
    }

    /// Diagonal cross marking a single point of interest.
    void add_marker(double x, double y, const std::string& color, double half_px = 6.0,
                    double stroke_width = 2.0) {
        const double cx = px(x), cy = py(y);
        for (int sgn : {-1, 1}) {
            body_ << "<line x1=\"" << detail::svg_num(cx - half_px) << "\" y1=\""
                  << detail::svg_num(cy - sgn * half_px) << "\" x2=\""
                  << detail::svg_num(cx + half_px) << "\" y2=\""
                  << detail::svg_num(cy + sgn * half_px) << "\" stroke=\"" << color
                  << "\" stroke-width=\"" << detail::svg_num(stroke_width) << "\"/>\n";
        }
    }

    void add_text(double x, double y, const std::string& text, int font_px = 12,
                  const std::string& color = "#333333") {
        body_ << "<text x=\"" << detail::svg_num(px(x)) << "\" y=\"" << detail::svg_num(py(y))
              << "\" font-size=\"" << font_px << "\" font-family=\"sans-serif\" fill=\"" << color
              << "\">" << text << "</text>\n";
    }

    /// One <rect> per unmasked cell. values(r, c) sits at data point
    /// (lo + c*h, lo + r*h); colors span the unmasked min..max.
    void add_heatmap(const Eigen::MatrixXd& values,
                     const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>& mask,
                     double lo, double hi) {
        if (values.rows() != mask.rows() || values.cols() != mask.cols())
            throw DimensionError("SvgCanvas::add_heatmap: values and mask shapes differ");
        if (values.rows() < 2 || values.cols() < 2)
            throw DimensionError("SvgCanvas::add_heatmap: grid needs at least 2 x 2 cells");
        double vmin = std::numeric_limits<double>::infinity();
        double vmax = -std::numeric_limits<double>::infinity();
        for (Eigen::Index r = 0; r < values.rows(); ++r)
            for (Eigen::Index c = 0; c < values.cols(); ++c)
                if (!mask(r, c)) {
                    vmin = std::min(vmin, values(r, c));
                    vmax = std::max(vmax, values(r, c));
                }
        if (!std::isfinite(vmin)) return;  // every cell masked
        const double span = vmax > vmin ? vmax - vmin : 1.0;
        const double hx = (hi - lo) / static_cast<double>(values.cols() - 1);
        const double hy = (hi - lo) / static_cast<double>(values.rows() - 1);
        for (Eigen::Index r = 0; r < values.rows(); ++r) {
            for (Eigen::Index c = 0; c < values.cols(); ++c) {
                if (mask(r, c)) continue;
                const double x = lo + static_cast<double>(c) * hx;
                const double y = lo + static_cast<double>(r) * hy;
                const double t = (values(r, c) - vmin) / span;
                body_ << "<rect x=\"" << detail::svg_num(px(x - 0.5 * hx)) << "\" y=\""
                      << detail::svg_num(py(y + 0.5 * hy)) << "\" width=\""
                      << detail::svg_num(px(x + 0.5 * hx) - px(x - 0.5 * hx)) << "\" height=\""
                      << detail::svg_num(py(y - 0.5 * hy) - py(y + 0.5 * hy)) << "\" fill=\""
                      << detail::heat_color(t) << "\"/>\n";
            }
        }
    }

    /// Thin frame around the data area plus corner coordinate labels.
    void add_frame() {
        body_ << "<rect x=\"" << detail::svg_num(px(x_lo_)) << "\" y=\""
              << detail::svg_num(py(y_hi_)) << "\" width=\""
              << detail::svg_num(px(x_hi_) - px(x_lo_)) << "\" height=\""
              << detail::svg_num(py(y_lo_) - py(y_hi_))
              << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
    }

    std::string str() const {
        std::ostringstream os;
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_
           << "\" viewBox=\"0 0 " << w_ << ' ' << h_ << "\">\n"
           << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
           << body_.str() << "</svg>\n";
        return os.str();
    }

    void write(const std::string& path) const {
        std::ofstream os(path);
        if (!os) throw ConfigError("cannot open SVG output file: " + path);
        os << str();
        if (!os) throw ConfigError("failed writing SVG output file: " + path);
    }

private:
    double x_lo_, x_hi_, y_lo_, y_hi_;
    int w_, h_, margin_;
    std::ostringstream body_;
};

}  // namespace w2dual
