#pragma once

#include <string>
#include <vector>

#include "pdqn/simulator.hpp"

namespace pdqn {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = true;
  int width = 720;
  int height = 440;
};

/// Line chart; non-positive values are dropped on a log axis.
std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& options);

/// Error against iterations (by_exchanges = false) or cumulative exchanges.
std::vector<Series> error_series(const std::vector<ConvergenceTrace>& traces, bool by_exchanges);

struct LabeledHistogram {
  std::string label;
  Histogram histogram;
};

/// Overlaid bar histograms sharing the same bins.
std::string histogram_svg(const std::vector<LabeledHistogram>& hists, const ChartOptions& options);

}  // namespace pdqn
