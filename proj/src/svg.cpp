#include "pdqn/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace pdqn {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
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

struct Frame {
  double left = 70, right = 160, top = 40, bottom = 50;
  double w, h;
  double x0, x1, y0, y1;
  bool log_y;
  double px(double x) const { return left + (x - x0) / (x1 - x0) * (w - left - right); }
  double py(double y) const {
    double v = log_y ? std::log10(y) : y;
    return top + (1.0 - (v - y0) / (y1 - y0)) * (h - top - bottom);
  }
};

void axes(std::ostringstream& s, const Frame& f, const ChartOptions& o) {
  const double pw = f.w - f.left - f.right, ph = f.h - f.top - f.bottom;
  s << "<rect x=\"" << num(f.left) << "\" y=\"" << num(f.top) << "\" width=\"" << num(pw) << "\" height=\"" << num(ph)
    << "\" fill=\"none\" stroke=\"#333\"/>\n";
  s << "<text x=\"" << num(f.w / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(o.title)
    << "</text>\n";
  s << "<text x=\"" << num(f.left + pw / 2) << "\" y=\"" << num(f.h - 10) << "\" text-anchor=\"middle\" font-size=\"12\">"
    << escape(o.x_label) << "</text>\n";
  s << "<text x=\"16\" y=\"" << num(f.top + ph / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << num(f.top + ph / 2) << ")\">" << escape(o.y_label) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    double x = f.px(xv);
    s << "<text x=\"" << num(x) << "\" y=\"" << num(f.h - f.bottom + 16) << "\" text-anchor=\"middle\" font-size=\"10\">"
      << tick(std::round(xv * 100) / 100) << "</text>\n";
  }
  if (f.log_y) {
    const int lo = static_cast<int>(std::ceil(f.y0)), hi = static_cast<int>(std::floor(f.y1));
    const int stride = std::max(1, (hi - lo) / 8 + 1);
    for (int e = lo; e <= hi; e += stride) {
      double y = f.py(std::pow(10.0, e));
      s << "<line x1=\"" << num(f.left) << "\" y1=\"" << num(y) << "\" x2=\"" << num(f.w - f.right) << "\" y2=\"" << num(y)
        << "\" stroke=\"#ddd\"/>\n";
      s << "<text x=\"" << num(f.left - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\" font-size=\"10\">1e"
        << e << "</text>\n";
    }
  } else {
    for (int k = 0; k <= 4; ++k) {
      double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
      double y = f.top + (1.0 - k / 4.0) * (f.h - f.top - f.bottom);
      s << "<text x=\"" << num(f.left - 6) << "\" y=\"" << num(y + 4) << "\" text-anchor=\"end\" font-size=\"10\">"
        << tick(std::round(yv * 100) / 100) << "</text>\n";
    }
  }
}

void legend(std::ostringstream& s, const Frame& f, const std::vector<std::string>& labels) {
  for (std::size_t k = 0; k < labels.size(); ++k) {
    double y = f.top + 14 + 18.0 * static_cast<double>(k);
    double x = f.w - f.right + 12;
    s << "<rect x=\"" << num(x) << "\" y=\"" << num(y - 8) << "\" width=\"14\" height=\"8\" fill=\""
      << kPalette[k % std::size(kPalette)] << "\"/>\n";
    s << "<text x=\"" << num(x + 20) << "\" y=\"" << num(y) << "\" font-size=\"11\">" << escape(labels[k]) << "</text>\n";
  }
}

std::string open(const Frame& f) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << static_cast<int>(f.w) << "\" height=\""
    << static_cast<int>(f.h) << "\" viewBox=\"0 0 " << static_cast<int>(f.w) << " " << static_cast<int>(f.h)
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& o) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series)
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      double y = s.y[k];
      if (!std::isfinite(y) || !std::isfinite(s.x[k]) || (o.log_y && y <= 0.0)) continue;
      xmin = std::min(xmin, s.x[k]);
      xmax = std::max(xmax, s.x[k]);
      double v = o.log_y ? std::log10(y) : y;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax <= xmin) xmax = xmin + 1;
  if (o.log_y) {
    ymin = std::floor(ymin);
    ymax = std::ceil(ymax);
  }
  if (ymax <= ymin) ymax = ymin + 1;
  Frame f;
  f.w = o.width;
  f.h = o.height;
  f.x0 = xmin;
  f.x1 = xmax;
  f.y0 = ymin;
  f.y1 = ymax;
  f.log_y = o.log_y;

  std::ostringstream s;
  s << open(f);
  axes(s, f, o);
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& sr = series[k];
    labels.push_back(sr.label);
    std::string d;
    bool pen = false;
    for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i) {
      double y = sr.y[i];
      if (!std::isfinite(y) || (o.log_y && y <= 0.0)) {
        pen = false;
        continue;
      }
      d += (pen ? " L" : " M") + num(f.px(sr.x[i])) + " " + num(f.py(y));
      pen = true;
    }
    s << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << kPalette[k % std::size(kPalette)]
      << "\" stroke-width=\"1.6\"/>\n";
  }
  legend(s, f, labels);
  s << "</svg>\n";
  return s.str();
}

std::vector<Series> error_series(const std::vector<ConvergenceTrace>& traces, bool by_exchanges) {
  std::vector<Series> out;
  for (const auto& t : traces) {
    Series s;
    s.label = t.variant;
    for (const auto& r : t.rows) {
      s.x.push_back(by_exchanges ? static_cast<double>(r.exchanges) : r.iteration);
      s.y.push_back(r.error);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string histogram_svg(const std::vector<LabeledHistogram>& hists, const ChartOptions& o) {
  Frame f;
  f.w = o.width;
  f.h = o.height;
  f.log_y = false;
  f.x0 = hists.empty() ? 0.0 : hists.front().histogram.lo;
  f.x1 = hists.empty() ? 1.0 : hists.front().histogram.hi;
  int peak = 1;
  for (const auto& h : hists)
    for (int c : h.histogram.counts) peak = std::max(peak, c);
  f.y0 = 0;
  f.y1 = peak;
  if (f.x1 <= f.x0) f.x1 = f.x0 + 1;

  std::ostringstream s;
  s << open(f);
  axes(s, f, o);
  std::vector<std::string> labels;
  const double groups = static_cast<double>(std::max<std::size_t>(1, hists.size()));
  for (std::size_t k = 0; k < hists.size(); ++k) {
    const Histogram& h = hists[k].histogram;
    labels.push_back(hists[k].label + " (censored " + std::to_string(h.censored) + ")");
    const double bw = (h.hi - h.lo) / static_cast<double>(std::max<std::size_t>(1, h.counts.size()));
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      if (h.counts[b] == 0) continue;
      double xa = h.lo + bw * static_cast<double>(b) + bw * static_cast<double>(k) / groups;
      double x = f.px(xa), x2 = f.px(xa + bw / groups);
      double y = f.py(h.counts[b]), y0 = f.py(0);
      s << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(std::max(0.5, x2 - x)) << "\" height=\""
        << num(y0 - y) << "\" fill=\"" << kPalette[k % std::size(kPalette)] << "\" fill-opacity=\"0.8\"/>\n";
    }
  }
  legend(s, f, labels);
  s << "</svg>\n";
  return s.str();
}

}  // namespace pdqn
