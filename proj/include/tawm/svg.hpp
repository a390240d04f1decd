#pragma once

// Minimal line-chart writer. Output depends only on the data, so identical
// inputs give identical files.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace tawm::svg {

struct Series {
  std::string name;
  std::vector<double> x, y;
  std::vector<double> lo, hi;  // optional band, same length as y
};

struct Chart {
  std::string title;
  std::string x_label = "x";
  std::string y_label = "y";
  bool log_x = false;
  std::vector<Series> series;
};

namespace detail {
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}
}  // namespace detail

inline void write_chart(std::ostream& os, const Chart& c) {
  using detail::num;
  constexpr double W = 720, H = 440, L = 80, R = 180, T = 40, B = 60;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2"};

  auto fx = [&](double x) { return c.log_x ? std::log10(x) : x; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : c.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (c.log_x && !(s.x[i] > 0))) continue;
      x0 = std::min(x0, fx(s.x[i]));
      x1 = std::max(x1, fx(s.x[i]));
      const double lo = i < s.lo.size() && std::isfinite(s.lo[i]) ? s.lo[i] : s.y[i];
      const double hi = i < s.hi.size() && std::isfinite(s.hi[i]) ? s.hi[i] : s.y[i];
      y0 = std::min(y0, lo);
      y1 = std::max(y1, hi);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (fx(x) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\"" << num(H)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << detail::escape(c.title)
     << "</text>\n";
  os << "<line x1=\"" << num(L) << "\" y1=\"" << num(H - B) << "\" x2=\"" << num(W - R) << "\" y2=\"" << num(H - B)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << num(L) << "\" y1=\"" << num(T) << "\" x2=\"" << num(L) << "\" y2=\"" << num(H - B)
     << "\" stroke=\"black\"/>\n";

  // Ticks: the distinct x values of the data, five evenly spaced y values.
  std::vector<double> xt;
  for (const auto& s : c.series) xt.insert(xt.end(), s.x.begin(), s.x.end());
  std::sort(xt.begin(), xt.end());
  xt.erase(std::unique(xt.begin(), xt.end()), xt.end());
  if (xt.size() > 12) {
    std::vector<double> thin;
    const std::size_t stride = (xt.size() + 11) / 12;
    for (std::size_t i = 0; i < xt.size(); i += stride) thin.push_back(xt[i]);
    xt = thin;
  }
  for (double x : xt) {
    if (c.log_x && !(x > 0)) continue;
    os << "<text x=\"" << num(px(x)) << "\" y=\"" << num(H - B + 16) << "\" text-anchor=\"middle\">"
       << detail::label(x) << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double y = y0 + (y1 - y0) * k / 4.0;
    os << "<text x=\"" << num(L - 6) << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\">" << detail::label(y)
       << "</text>\n";
    os << "<line x1=\"" << num(L) << "\" y1=\"" << num(py(y)) << "\" x2=\"" << num(W - R) << "\" y2=\"" << num(py(y))
       << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << num((L + W - R) / 2) << "\" y=\"" << num(H - 16) << "\" text-anchor=\"middle\">"
     << detail::escape(c.x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << num((T + H - B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << num((T + H - B) / 2) << ")\">" << detail::escape(c.y_label) << "</text>\n";

  for (std::size_t si = 0; si < c.series.size(); ++si) {
    const auto& s = c.series[si];
    const char* col = palette[si % std::size(palette)];
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.y[i]) && !(c.log_x && !(s.x[i] > 0))) idx.push_back(i);
    if (!s.lo.empty() && !idx.empty()) {
      os << "<polygon fill=\"" << col << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i : idx) os << num(px(s.x[i])) << ',' << num(py(std::isfinite(s.hi[i]) ? s.hi[i] : s.y[i])) << ' ';
      for (auto it = idx.rbegin(); it != idx.rend(); ++it)
        os << num(px(s.x[*it])) << ',' << num(py(std::isfinite(s.lo[*it]) ? s.lo[*it] : s.y[*it])) << ' ';
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i : idx) os << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
    os << "\"/>\n";
    for (std::size_t i : idx)
      os << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"3\" fill=\"" << col
         << "\"/>\n";
    const double ly = T + 16 + 18.0 * static_cast<double>(si);
    os << "<line x1=\"" << num(W - R + 12) << "\" y1=\"" << num(ly - 4) << "\" x2=\"" << num(W - R + 32) << "\" y2=\""
       << num(ly - 4) << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << num(W - R + 38) << "\" y=\"" << num(ly) << "\">" << detail::escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace tawm::svg
