#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include "finmamba/cli.hpp"

namespace finmamba::cli {

namespace {

constexpr double kWidth = 720.0, kHeight = 360.0, kMargin = 40.0;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

std::string escape(const std::string& s) {
    std::string r;
    for (char c : s) {
        switch (c) {
            case '<': r += "&lt;"; break;
            case '>': r += "&gt;"; break;
            case '&': r += "&amp;"; break;
            default: r += c;
        }
    }
    return r;
}

}  // namespace

void write_line_svg(std::ostream& out, const std::string& title, const std::vector<Series>& series) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    std::size_t len = 0;
    for (const auto& [_, ys] : series) {
        len = std::max(len, ys.size());
        for (double y : ys)
            if (std::isfinite(y)) lo = std::min(lo, y), hi = std::max(hi, y);
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double span_x = len > 1 ? static_cast<double>(len - 1) : 1.0;

    out << std::setprecision(6);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kMargin << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << escape(title)
        << "</text>\n";
    out << "<text x=\"4\" y=\"" << kMargin << "\" font-size=\"10\">" << hi << "</text>\n";
    out << "<text x=\"4\" y=\"" << kHeight - kMargin << "\" font-size=\"10\">" << lo << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& [name, ys] = series[s];
        const char* color = kPalette[s % std::size(kPalette)];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < ys.size(); ++i) {
            if (!std::isfinite(ys[i])) continue;
            const double x = kMargin + (kWidth - 2 * kMargin) * static_cast<double>(i) / span_x;
            const double y = kHeight - kMargin - (kHeight - 2 * kMargin) * (ys[i] - lo) / (hi - lo);
            out << x << ',' << y << ' ';
        }
        out << "\"/>\n";
        out << "<text x=\"" << kWidth - 160 << "\" y=\"" << 20 + 14 * s << "\" font-size=\"11\" fill=\"" << color
            << "\">" << escape(name) << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace finmamba::cli
