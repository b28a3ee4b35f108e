#pragma once

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

// Minimal static SVG charts for report comparisons.
namespace mmrr::app::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  return palette[i % 6];
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

namespace detail {

inline std::string num(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

struct Frame {
  double w = 560, h = 360, left = 60, right = 170, top = 40, bottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  double px(double x) const { return left + (x - x0) / std::max(x1 - x0, 1e-12) * (w - left - right); }
  double py(double y) const { return h - bottom - (y - y0) / std::max(y1 - y0, 1e-12) * (h - top - bottom); }
};

inline void axes(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& xlabel,
                 const std::string& ylabel) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << f.w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << f.w - f.right << "\" y2=\"" << f.py(f.y0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << f.left << "\" y1=\"" << f.py(f.y0) << "\" x2=\"" << f.left << "\" y2=\"" << f.py(f.y1)
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << f.left - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
       << num(y) << "</text>\n";
  }
  os << "<text x=\"" << (f.left + f.w - f.right) / 2 << "\" y=\"" << f.h - 12
     << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(xlabel) << "</text>\n";
  os << "<text x=\"16\" y=\"" << f.h / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
     << f.h / 2 << ")\">" << escape(ylabel) << "</text>\n";
}

inline void legend(std::ostringstream& os, const Frame& f, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 16.0 * static_cast<double>(i);
    os << "<rect x=\"" << f.w - f.right + 12 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\"" << color(i)
       << "\"/>\n";
    os << "<text x=\"" << f.w - f.right + 26 << "\" y=\"" << y + 9 << "\" font-size=\"11\">" << escape(names[i])
       << "</text>\n";
  }
}

}  // namespace detail

// Line chart with y in [0, 1].
inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
  detail::Frame f;
  bool any = false;
  for (const auto& s : series)
    for (const auto& [x, _] : s.points) {
      f.x0 = any ? std::min(f.x0, x) : x;
      f.x1 = any ? std::max(f.x1, x) : x;
      any = true;
    }
  if (f.x1 == f.x0) f.x1 = f.x0 + 1;
  std::ostringstream os;
  detail::axes(os, f, title, xlabel, ylabel);
  std::vector<double> xs;
  for (const auto& s : series)
    for (const auto& [x, _] : s.points) xs.push_back(x);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (double x : xs)
    os << "<text x=\"" << f.px(x) << "\" y=\"" << f.py(0) + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
       << detail::num(x) << "</text>\n";
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    names.push_back(series[i].name);
    os << "<polyline fill=\"none\" stroke=\"" << color(i) << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[i].points) os << f.px(x) << ',' << f.py(y) << ' ';
    os << "\"/>\n";
    for (const auto& [x, y] : series[i].points)
      os << "<circle cx=\"" << f.px(x) << "\" cy=\"" << f.py(y) << "\" r=\"3\" fill=\"" << color(i) << "\"/>\n";
  }
  detail::legend(os, f, names);
  os << "</svg>\n";
  return os.str();
}

// Grouped bars: one group per category, one bar per series; y in [0, 1].
inline std::string bar_chart(const std::string& title, const std::vector<std::string>& categories,
                             const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  detail::Frame f;
  f.x0 = 0;
  f.x1 = static_cast<double>(std::max<std::size_t>(categories.size(), 1));
  std::ostringstream os;
  detail::axes(os, f, title, "", "mean confidence");
  const double group = f.px(1) - f.px(0);
  const double bar = group * 0.8 / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    os << "<text x=\"" << f.px(static_cast<double>(c) + 0.5) << "\" y=\"" << f.py(0) + 16
       << "\" text-anchor=\"middle\" font-size=\"11\">" << escape(categories[c]) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = c < series[s].second.size() ? series[s].second[c] : 0.0;
      const double x = f.px(static_cast<double>(c)) + group * 0.1 + bar * static_cast<double>(s);
      os << "<rect x=\"" << x << "\" y=\"" << f.py(v) << "\" width=\"" << bar << "\" height=\"" << f.py(0) - f.py(v)
         << "\" fill=\"" << color(s) << "\"/>\n";
    }
  }
  std::vector<std::string> names;
  for (const auto& [n, _] : series) names.push_back(n);
  detail::legend(os, f, names);
  os << "</svg>\n";
  return os.str();
}

}  // namespace mmrr::app::svg
