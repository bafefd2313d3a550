#pragma once

// Minimal standalone SVG charts: labelled scatter plots (cost vs. quality)
// and line plots (loss curves).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ccnet/tensor.hpp"

namespace ccnet {

struct ScatterPoint {
  std::string label;
  double x = 0;
  double y = 0;
};

struct LineSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartLabels {
  std::string title;
  std::string x_axis;
  std::string y_axis;
  bool log_y = false;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
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

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Frame {
  double x0, x1, y0, y1;
  bool log_y;
  static constexpr double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 55;

  double fy(double v) const { return log_y ? std::log10(std::max(v, 1e-300)) : v; }
  double px(double v) const { return left + (v - x0) / (x1 - x0) * (width - left - right); }
  double py(double v) const { return height - bottom - (fy(v) - y0) / (y1 - y0) * (height - top - bottom); }
};

inline Frame make_frame(double xmin, double xmax, double ymin, double ymax, bool log_y) {
  Frame f{xmin, xmax, log_y ? std::log10(std::max(ymin, 1e-300)) : ymin,
          log_y ? std::log10(std::max(ymax, 1e-300)) : ymax, log_y};
  auto widen = [](double& lo, double& hi) {
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    const double pad = 0.06 * (hi - lo);
    lo -= pad;
    hi += pad;
  };
  widen(f.x0, f.x1);
  widen(f.y0, f.y1);
  return f;
}

inline void axes(std::ostringstream& os, const Frame& f, const ChartLabels& labels) {
  const double W = Frame::width, H = Frame::height;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << xml_escape(labels.title) << "</text>\n";
  const double bx = Frame::left, by = H - Frame::bottom, ex = W - Frame::right, ey = Frame::top;
  os << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << ex << "\" y2=\"" << by << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << bx << "\" y2=\"" << ey << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    const double X = f.px(xv);
    const double Y = H - Frame::bottom - (H - Frame::top - Frame::bottom) * i / 4.0;
    os << "<text x=\"" << X << "\" y=\"" << by + 16 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n"
       << "<text x=\"" << bx - 6 << "\" y=\"" << Y + 4 << "\" text-anchor=\"end\">"
       << num(f.log_y ? std::pow(10.0, yv) : yv) << "</text>\n"
       << "<line x1=\"" << bx << "\" y1=\"" << Y << "\" x2=\"" << ex << "\" y2=\"" << Y
       << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << (bx + ex) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
     << xml_escape(labels.x_axis) << "</text>\n"
     << "<text transform=\"translate(16," << (by + ey) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(labels.y_axis) << "</text>\n";
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};
  return colors[i % 7];
}

}  // namespace detail

inline std::string scatter_svg(const std::vector<ScatterPoint>& points, const ChartLabels& labels) {
  if (points.empty()) throw InputError("scatter plot needs at least one point");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  if (!std::isfinite(xmin)) throw InputError("scatter plot has no finite points");
  const auto f = detail::make_frame(xmin, xmax, ymin, ymax, labels.log_y);
  std::ostringstream os;
  detail::axes(os, f, labels);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    os << "<circle cx=\"" << f.px(p.x) << "\" cy=\"" << f.py(p.y) << "\" r=\"5\" fill=\"" << detail::palette(i)
       << "\"/>\n<text x=\"" << f.px(p.x) + 8 << "\" y=\"" << f.py(p.y) - 6 << "\">" << detail::xml_escape(p.label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline std::string line_svg(const std::vector<LineSeries>& series, const ChartLabels& labels) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw InputError("line series '" + s.label + "' has mismatched x/y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (labels.log_y && s.y[i] <= 0)) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) throw InputError("line plot has no finite points");
  const auto f = detail::make_frame(xmin, xmax, ymin, ymax, labels.log_y);
  std::ostringstream os;
  detail::axes(os, f, labels);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << detail::palette(k) << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (labels.log_y && s.y[i] <= 0)) continue;
      os << f.px(s.x[i]) << ',' << f.py(s.y[i]) << ' ';
    }
    os << "\"/>\n<text x=\"" << detail::Frame::width - 160 << "\" y=\"" << 58 + 16 * k << "\" fill=\"" << detail::palette(k)
       << "\">" << detail::xml_escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

}  // namespace ccnet
