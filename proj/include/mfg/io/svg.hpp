#pragma once

#include <string>
#include <vector>

namespace mfg::io {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = true;
  int width = 640;
  int height = 400;
};

/// Line chart with one polyline per series. Non-finite points (and
/// nonpositive ones on a log axis) are skipped. Output depends only on the
/// input, byte for byte.
std::string line_chart_svg(const ChartSpec& spec, const std::vector<Series>& series);

}  // namespace mfg::io
