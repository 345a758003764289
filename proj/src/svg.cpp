#include "mfg/io/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace mfg::io {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string tick_label(double v, bool log_y) {
  char buf[32];
  if (log_y) std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(std::lround(v)));
  else std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// a fixed palette keeps the output independent of anything but the input
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string line_chart_svg(const ChartSpec& spec, const std::vector<Series>& series) {
  const double left = 70, right = 20, top = 40, bottom = 50;
  const double pw = spec.width - left - right;
  const double ph = spec.height - top - bottom;

  // transformed points per series
  std::vector<std::vector<std::pair<double, double>>> pts(series.size());
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& ser = series[s];
    for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i) {
      const double x = ser.x[i];
      double y = ser.y[i];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (spec.log_y) {
        if (!(y > 0)) continue;
        y = std::log10(y);
      }
      pts[s].emplace_back(x, y);
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  const bool empty = !std::isfinite(xmin);
  if (empty) {
    xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  }
  if (xmax == xmin) xmin -= 1, xmax += 1;
  if (spec.log_y) {
    ymin = std::floor(ymin);
    ymax = std::ceil(ymax);
  }
  if (ymax == ymin) ymin -= 1, ymax += 1;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.width) + "\" height=\"" +
         std::to_string(spec.height) + "\" viewBox=\"0 0 " + std::to_string(spec.width) + " " +
         std::to_string(spec.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(spec.width / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
         escape(spec.title) + "</text>\n";
  out += "<rect x=\"" + fmt(left) + "\" y=\"" + fmt(top) + "\" width=\"" + fmt(pw) + "\" height=\"" + fmt(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";

  // y ticks: every decade on a log axis, five intervals otherwise
  const int decades = static_cast<int>(std::lround(ymax - ymin));
  const int ny = spec.log_y ? std::max(1, decades) : 5;
  const int stride = spec.log_y ? std::max(1, ny / 10) : 1;
  for (int k = 0; k <= ny; k += stride) {
    const double v = ymin + (ymax - ymin) * k / ny;
    out += "<line class=\"ytick\" x1=\"" + fmt(left - 4) + "\" y1=\"" + fmt(py(v)) + "\" x2=\"" + fmt(left) +
           "\" y2=\"" + fmt(py(v)) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + fmt(left - 6) + "\" y=\"" + fmt(py(v) + 4) + "\" text-anchor=\"end\" font-size=\"11\">" +
           tick_label(v, spec.log_y) + "</text>\n";
  }
  for (int k = 0; k <= 5; ++k) {
    const double v = xmin + (xmax - xmin) * k / 5;
    out += "<text x=\"" + fmt(px(v)) + "\" y=\"" + fmt(top + ph + 16) + "\" text-anchor=\"middle\" font-size=\"11\">" +
           tick_label(v, false) + "</text>\n";
  }
  out += "<text x=\"" + fmt(left + pw / 2) + "\" y=\"" + fmt(spec.height - 10.0) +
         "\" text-anchor=\"middle\" font-size=\"12\">" + escape(spec.x_label) + "</text>\n";
  out += "<text x=\"14\" y=\"" + fmt(top + ph / 2) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 14 " +
         fmt(top + ph / 2) + ")\">" + escape(spec.y_label) + "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % (sizeof kColors / sizeof *kColors)];
    if (!pts[s].empty()) {
      out += "<polyline class=\"series\" data-label=\"" + escape(series[s].label) + "\" fill=\"none\" stroke=\"" +
             color + "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < pts[s].size(); ++i) {
        if (i) out += ' ';
        out += fmt(px(pts[s][i].first)) + "," + fmt(py(pts[s][i].second));
      }
      out += "\"/>\n";
      for (const auto& [x, y] : pts[s])
        out += "<circle cx=\"" + fmt(px(x)) + "\" cy=\"" + fmt(py(y)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
    }
    const double ly = top + 14 + 16.0 * static_cast<double>(s);
    out += "<text x=\"" + fmt(left + pw - 8) + "\" y=\"" + fmt(ly) + "\" text-anchor=\"end\" font-size=\"11\" fill=\"" +
           color + "\">" + escape(series[s].label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace mfg::io
