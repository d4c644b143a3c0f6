#include "uwmmse/plot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "uwmmse/errors.hpp"

namespace uwmmse::plot {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 160, kTop = 40, kBottom = 55;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                               "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi == lo) {
      const double pad = lo == 0 ? 1.0 : std::abs(lo) * 0.1;
      lo -= pad;
      hi += pad;
    }
  }
};

class Canvas {
 public:
  Canvas(const Axes& axes, Range xr, Range yr) : xr_(xr), yr_(yr) {
    out_.precision(6);
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
         << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    text(kWidth / 2 - kRight / 2 + kLeft / 2, 22, axes.title, "middle", 15);
    text(kLeft + plot_w() / 2, kHeight - 12, axes.x_label, "middle");
    out_ << "<text transform=\"translate(18," << kTop + plot_h() / 2
         << ") rotate(-90)\" text-anchor=\"middle\">" << escape(axes.y_label) << "</text>\n";
    out_ << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w()
         << "\" height=\"" << plot_h() << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
      const double fx = xr_.lo + (xr_.hi - xr_.lo) * t / 4.0;
      const double fy = yr_.lo + (yr_.hi - yr_.lo) * t / 4.0;
      text(px(fx), kTop + plot_h() + 16, tick(fx), "middle");
      text(kLeft - 6, py(fy) + 4, tick(fy), "end");
    }
  }

  double px(double x) const { return kLeft + (x - xr_.lo) / (xr_.hi - xr_.lo) * plot_w(); }
  double py(double y) const { return kTop + plot_h() - (y - yr_.lo) / (yr_.hi - yr_.lo) * plot_h(); }

  void polyline(const std::vector<std::pair<double, double>>& pts, const char* color) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (auto [x, y] : pts) out_ << px(x) << ',' << py(y) << ' ';
    out_ << "\"/>\n";
  }

  void marker(double x, double y, const char* color) {
    out_ << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
  }

  void vline(double x, double y0, double y1, const char* color) {
    out_ << "<line x1=\"" << px(x) << "\" y1=\"" << py(y0) << "\" x2=\"" << px(x) << "\" y2=\""
         << py(y1) << "\" stroke=\"" << color << "\"/>\n";
  }

  void legend(std::size_t k, const std::string& name, const char* color) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(k);
    const double x = kWidth - kRight + 12;
    out_ << "<line x1=\"" << x << "\" y1=\"" << y << "\" x2=\"" << x + 18 << "\" y2=\"" << y
         << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    text(x + 24, y + 4, name, "start");
  }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  static double plot_w() { return kWidth - kLeft - kRight; }
  static double plot_h() { return kHeight - kTop - kBottom; }

  static std::string tick(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
  }

  void text(double x, double y, const std::string& s, const char* anchor, int size = 12) {
    out_ << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
         << "\" font-size=\"" << size << "\">" << escape(s) << "</text>\n";
  }

  Range xr_, yr_;
  std::ostringstream out_;
};

const char* color(std::size_t k) { return kColors[k % std::size(kColors)]; }

}  // namespace

std::string line_chart(const Axes& axes, const std::vector<Series>& series) {
  Range xr, yr;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ShapeError("line_chart: x and y lengths differ");
    if (!s.err.empty() && s.err.size() != s.y.size()) {
      throw ShapeError("line_chart: error bars must match y");
    }
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      xr.add(s.x[k]);
      const double e = s.err.empty() ? 0.0 : s.err[k];
      yr.add(s.y[k] - e);
      yr.add(s.y[k] + e);
    }
  }
  xr.finish();
  yr.finish();
  Canvas c(axes, xr, yr);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      pts.emplace_back(s.x[i], s.y[i]);
      c.marker(s.x[i], s.y[i], color(k));
      if (!s.err.empty()) c.vline(s.x[i], s.y[i] - s.err[i], s.y[i] + s.err[i], color(k));
    }
    c.polyline(pts, color(k));
    c.legend(k, s.name, color(k));
  }
  return c.finish();
}

std::string histogram(const Axes& axes, const std::vector<double>& edges,
                      const std::vector<Series>& series) {
  if (edges.size() < 2) throw ShapeError("histogram: need at least two bin edges");
  Range xr, yr;
  xr.add(edges.front());
  xr.add(edges.back());
  yr.add(0.0);
  for (const auto& s : series) {
    if (s.y.size() + 1 != edges.size()) throw ShapeError("histogram: counts must match bins");
    for (double v : s.y) yr.add(v);
  }
  xr.finish();
  yr.finish();
  Canvas c(axes, xr, yr);
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::vector<std::pair<double, double>> pts{{edges.front(), 0.0}};
    for (std::size_t b = 0; b < series[k].y.size(); ++b) {
      pts.emplace_back(edges[b], series[k].y[b]);
      pts.emplace_back(edges[b + 1], series[k].y[b]);
    }
    pts.emplace_back(edges.back(), 0.0);
    c.polyline(pts, color(k));
    c.legend(k, series[k].name, color(k));
  }
  return c.finish();
}

}  // namespace uwmmse::plot
