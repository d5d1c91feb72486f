#include "dcpo/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace dcpo {
namespace {

constexpr int kWidth = 800;
constexpr int kHeight = 500;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 160;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

// Round tick spacing to 1/2/5 * 10^k covering the data range.
double tick_step(double span) {
  if (span <= 0.0) return 1.0;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  if (frac <= 1.0) return mag;
  if (frac <= 2.0) return 2.0 * mag;
  if (frac <= 5.0) return 5.0 * mag;
  return 10.0 * mag;
}

}  // namespace

void write_line_chart(std::ostream& out, std::span<const PlotSeries> series,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label) {
  if (series.empty()) throw std::invalid_argument("no series to plot");
  double x_min = 0.0, x_max = 1.0, y_min = 0.0, y_max = 1.0;
  bool first = true;
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size())
      throw std::invalid_argument("series x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        x_min = x_max = s.x[i];
        y_min = y_max = s.y[i];
        first = false;
      }
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }
  if (first) throw std::invalid_argument("all series are empty");
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;
  const double px0 = kMarginLeft, px1 = kWidth - kMarginRight;
  const double py0 = kHeight - kMarginBottom, py1 = kMarginTop;
  auto sx = [&](double x) {
    return px0 + (x - x_min) / (x_max - x_min) * (px1 - px0);
  };
  auto sy = [&](double y) {
    return py0 + (y - y_min) / (y_max - y_min) * (py1 - py0);
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << (px0 + px1) / 2.0
      << "\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" "
         "font-size=\"16\">"
      << escape(title) << "</text>\n";

  const double xs = tick_step(x_max - x_min);
  const double ys = tick_step(y_max - y_min);
  out << "<g font-family=\"monospace\" font-size=\"11\" fill=\"#333\">\n";
  for (double t = std::ceil(x_min / xs) * xs; t <= x_max + 1e-12 * xs;
       t += xs) {
    const double p = sx(t);
    out << "<line x1=\"" << fmt(p) << "\" y1=\"" << fmt(py0) << "\" x2=\""
        << fmt(p) << "\" y2=\"" << fmt(py1)
        << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(p) << "\" y=\"" << fmt(py0 + 16)
        << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
  }
  for (double t = std::ceil(y_min / ys) * ys; t <= y_max + 1e-12 * ys;
       t += ys) {
    const double p = sy(t);
    out << "<line x1=\"" << fmt(px0) << "\" y1=\"" << fmt(p) << "\" x2=\""
        << fmt(px1) << "\" y2=\"" << fmt(p)
        << "\" stroke=\"#ddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << fmt(px0 - 6) << "\" y=\"" << fmt(p + 4)
        << "\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
  }
  out << "</g>\n";
  out << "<rect x=\"" << fmt(px0) << "\" y=\"" << fmt(py1) << "\" width=\""
      << fmt(px1 - px0) << "\" height=\"" << fmt(py0 - py1)
      << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";
  out << "<text x=\"" << fmt((px0 + px1) / 2.0) << "\" y=\""
      << fmt(kHeight - 12)
      << "\" text-anchor=\"middle\" font-family=\"monospace\" "
         "font-size=\"13\">"
      << escape(x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << fmt((py0 + py1) / 2.0)
      << "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"13\""
         " transform=\"rotate(-90 18 "
      << fmt((py0 + py1) / 2.0) << ")\">" << escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const PlotSeries& s = series[si];
    const char* color = kPalette[si % (sizeof kPalette / sizeof *kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) out << ' ';
      out << fmt(sx(s.x[i])) << ',' << fmt(sy(s.y[i]));
    }
    out << "\"/>\n";
    const double ly = kMarginTop + 16.0 * static_cast<double>(si);
    out << "<line x1=\"" << fmt(px1 + 10) << "\" y1=\"" << fmt(ly)
        << "\" x2=\"" << fmt(px1 + 34) << "\" y2=\"" << fmt(ly)
        << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << fmt(px1 + 40) << "\" y=\"" << fmt(ly + 4)
        << "\" font-family=\"monospace\" font-size=\"11\">"
        << escape(s.label) << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace dcpo
