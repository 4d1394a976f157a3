// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal SVG charts: signed horizontal bars and line plots.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "chronic/common.hpp"

namespace chronic::svg {

inline std::string escape(std::string_view s) {
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

inline std::string num(double v) { return format_fixed(v, 2); }

// Bars are drawn in the given order; positive weights green, negative red.
inline std::string bar_chart(const std::string& title,
                             const std::vector<std::pair<std::string, double>>& bars) {
  const double label_w = 330, plot_w = 360, row_h = 22, top = 40;
  const double height = top + row_h * double(bars.size()) + 40;
  double max_abs = 0;
  for (auto& b : bars) max_abs = std::max(max_abs, std::abs(b.second));
  if (max_abs == 0) max_abs = 1;
  const double zero_x = label_w + plot_w / 2, scale = (plot_w / 2 - 10) / max_abs;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(label_w + plot_w + 80)
     << "\" height=\"" << num(height) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"10\" y=\"22\" font-size=\"15\">" << escape(title) << "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = top + row_h * double(i), w = bars[i].second * scale;
    const double x = w >= 0 ? zero_x : zero_x + w;
    os << "<text x=\"" << num(label_w - 6) << "\" y=\"" << num(y + 15) << "\" text-anchor=\"end\">"
       << escape(bars[i].first) << "</text>\n";
    os << "<rect x=\"" << num(x) << "\" y=\"" << num(y + 3) << "\" width=\"" << num(std::abs(w))
       << "\" height=\"" << num(row_h - 6) << "\" fill=\"" << (bars[i].second >= 0 ? "#2e8b57" : "#c0392b")
       << "\"/>\n";
    os << "<text x=\"" << num(label_w + plot_w + 4) << "\" y=\"" << num(y + 15) << "\">"
       << format_fixed(bars[i].second, 4) << "</text>\n";
  }
  os << "<line x1=\"" << num(zero_x) << "\" y1=\"" << num(top) << "\" x2=\"" << num(zero_x)
     << "\" y2=\"" << num(height - 30) << "\" stroke=\"black\"/>\n";
  os << "</svg>\n";
  return os.str();
}

struct Series {
  std::string name;
  std::vector<double> values;
  std::string color;
};

// x runs 1..n; one polyline per series.
inline std::string line_chart(const std::string& title, const std::string& x_label,
                              const std::vector<Series>& series) {
  const double W = 640, H = 400, left = 60, right = 20, top = 40, bottom = 50;
  std::size_t n = 0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto& s : series) {
    n = std::max(n, s.values.size());
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (n == 0 || !(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 1 : 0;
    hi = lo + 2;
  }
  auto px = [&](std::size_t i) { return left + (n > 1 ? double(i) / double(n - 1) : 0.5) * (W - left - right); };
  auto py = [&](double v) { return top + (hi - v) / (hi - lo) * (H - top - bottom); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\"" << num(H)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<text x=\"10\" y=\"22\" font-size=\"15\">" << escape(title) << "</text>\n";
  os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(W - left - right)
     << "\" height=\"" << num(H - top - bottom) << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(top + 4) << "\" text-anchor=\"end\">" << format_fixed(hi, 3) << "</text>\n";
  os << "<text x=\"" << num(left - 4) << "\" y=\"" << num(H - bottom) << "\" text-anchor=\"end\">" << format_fixed(lo, 3) << "</text>\n";
  os << "<text x=\"" << num(W / 2) << "\" y=\"" << num(H - 12) << "\" text-anchor=\"middle\">" << escape(x_label)
     << " (1-" << n << ")</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    auto& s = series[k];
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.values.size(); ++i) os << (i ? " " : "") << num(px(i)) << ',' << num(py(s.values[i]));
    os << "\"/>\n";
    os << "<text x=\"" << num(W - right - 120) << "\" y=\"" << num(top + 16 + 16 * double(k)) << "\" fill=\""
       << s.color << "\">" << escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write(const std::filesystem::path& path, const std::string& doc) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write " + path.string());
  os << doc;
}

}  // namespace chronic::svg
