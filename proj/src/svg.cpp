#include "cfglab/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "cfglab/errors.hpp"

namespace cfglab {

namespace {

constexpr const char* kPalette[] = {"#4269d0", "#efb118", "#ff725c", "#6cc5b0",
                                    "#3ca951", "#ff8ab7", "#a463f2", "#97bbf5"};
constexpr int kPaletteSize = 8;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

void emit_scatter_svg(std::span<const SvgSeries> series, const std::filesystem::path& path,
                      const std::string& digest) {
    if (series.empty()) throw ConfigError("emit_scatter_svg: no series");
    double min_x = 0.0, max_x = 0.0, min_y = 0.0, max_y = 0.0;
    bool any = false;
    for (const SvgSeries& s : series) {
        if (s.points == nullptr || s.points->cols != 2) {
            throw ShapeError("emit_scatter_svg: series points must be n×2");
        }
        for (int i = 0; i < s.points->rows; ++i) {
            const double x = s.points->at(i, 0);
            const double y = s.points->at(i, 1);
            if (!any) {
                min_x = max_x = x;
                min_y = max_y = y;
                any = true;
            } else {
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
        }
    }
    if (!any) throw ConfigError("emit_scatter_svg: no points");

    const double span_x = std::max(max_x - min_x, 1e-9);
    const double span_y = std::max(max_y - min_y, 1e-9);
    const double margin = 0.1 * std::max(span_x, span_y);
    const double vx = min_x - margin;
    const double vw = span_x + 2.0 * margin;
    // SVG y grows downward; points are emitted with y negated, so the viewBox
    // covers [-max_y - margin, ...] upward through the flipped data range.
    const double vy = -max_y - margin;
    const double vh = span_y + 2.0 * margin;
    const double extent = std::max(vw, vh);
    const double r = 0.004 * extent;
    const double font = 0.035 * extent;

    std::ofstream out(path);
    if (!out) throw IoError("cannot write svg: " + path.string());
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" viewBox=\""
        << fmt(vx) << ' ' << fmt(vy) << ' ' << fmt(vw) << ' ' << fmt(vh) << "\">\n";
    out << "<!-- config " << escape_xml(digest) << " -->\n";
    out << "<rect x=\"" << fmt(vx) << "\" y=\"" << fmt(vy) << "\" width=\"" << fmt(vw)
        << "\" height=\"" << fmt(vh) << "\" fill=\"white\"/>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        out << "<g fill=\"" << color << "\" fill-opacity=\"0.55\">\n";
        const Matrix& pts = *series[s].points;
        for (int i = 0; i < pts.rows; ++i) {
            out << "<circle cx=\"" << fmt(pts.at(i, 0)) << "\" cy=\"" << fmt(-pts.at(i, 1))
                << "\" r=\"" << fmt(r) << "\"/>\n";
        }
        out << "</g>\n";
    }

    // Legend: rect swatches so the circle count stays equal to the point count.
    const double swatch = font * 0.8;
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        const double ly = vy + margin * 0.4 + static_cast<double>(s) * font * 1.3;
        out << "<rect x=\"" << fmt(vx + margin * 0.4) << "\" y=\"" << fmt(ly) << "\" width=\""
            << fmt(swatch) << "\" height=\"" << fmt(swatch) << "\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << fmt(vx + margin * 0.4 + swatch * 1.4) << "\" y=\""
            << fmt(ly + swatch * 0.85) << "\" font-family=\"sans-serif\" font-size=\"" << fmt(font)
            << "\" fill=\"#222\">" << escape_xml(series[s].label) << "</text>\n";
    }
    out << "</svg>\n";
    out.flush();
    if (!out) throw IoError("svg write failed: " + path.string());
}

}  // namespace cfglab
