#pragma once

// Minimal standalone SVG charts for experiment outputs.

#include <string>
#include <vector>

namespace uwmmse::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> err;  // optional symmetric error bars, same length as y
};

struct Axes {
  std::string title;
  std::string x_label;
  std::string y_label;
};

// Polyline per series with point markers and a legend.
std::string line_chart(const Axes& axes, const std::vector<Series>& series);

// Step histograms sharing the bin edges; series y holds the counts and x is
// ignored.
std::string histogram(const Axes& axes, const std::vector<double>& edges,
                      const std::vector<Series>& series);

}  // namespace uwmmse::plot
