#include "mom/plot.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace mom {

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
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

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kTop + (y1 - y) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string path_of(const LossCurve& c, const Frame& f) {
  std::string d;
  for (std::size_t i = 0; i < c.x().size(); ++i) {
    d += (i == 0 ? "M" : " L") + num(f.px(c.x()[i])) + "," + num(f.py(c.smoothed()[i]));
  }
  return d;
}

}  // namespace

std::string render_match_svg(const LossCurve& baseline, const LossCurve& candidate, const MatchResult& match,
                             const PlotLabels& labels) {
  Frame f{std::min(baseline.x().front(), candidate.x().front()), std::max(baseline.x().back(), candidate.x().back()),
          0, 0};
  const auto [bmin, bmax] = std::minmax_element(baseline.smoothed().begin(), baseline.smoothed().end());
  const auto [cmin, cmax] = std::minmax_element(candidate.smoothed().begin(), candidate.smoothed().end());
  f.y0 = std::min(*bmin, *cmin);
  f.y1 = std::max(*bmax, *cmax);
  if (f.y1 - f.y0 < 1e-12) {
    f.y0 -= 0.5;
    f.y1 += 0.5;
  }
  if (f.x1 - f.x0 < 1e-12) f.x1 = f.x0 + 1;

  std::ostringstream s;
  s << R"(<?xml version="1.0" encoding="UTF-8"?>)" << '\n'
    << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << kWidth << R"(" height=")" << kHeight << R"(">)" << '\n'
    << R"(<rect x="0" y="0" width=")" << kWidth << R"(" height=")" << kHeight << R"(" fill="white"/>)" << '\n'
    << R"(<text x=")" << kWidth / 2 << R"(" y="24" text-anchor="middle" font-size="16">)" << escape(labels.title)
    << "</text>\n"
    << R"(<text x=")" << kWidth / 2 << R"(" y=")" << kHeight - 12 << R"(" text-anchor="middle" font-size="12">)"
    << escape(labels.x_axis) << "</text>\n"
    << R"(<text x=")" << kLeft << R"(" y=")" << kTop - 6 << R"(" font-size="11">)" << num(f.y1) << "</text>\n"
    << R"(<text x=")" << kLeft << R"(" y=")" << kHeight - kBottom + 14 << R"(" font-size="11">)" << num(f.y0)
    << "</text>\n"
    << R"(<g fill="none" stroke-width="1.5">)" << '\n'
    << R"(<path stroke="#1f77b4" d=")" << path_of(baseline, f) << R"("><title>)" << escape(labels.baseline)
    << "</title></path>\n"
    << R"(<path stroke="#d62728" d=")" << path_of(candidate, f) << R"("><title>)" << escape(labels.candidate)
    << "</title></path>\n"
    << "</g>\n";
  if (match.target >= f.y0 && match.target <= f.y1) {
    s << R"(<line x1=")" << num(kLeft) << R"(" x2=")" << num(kWidth - kRight) << R"(" y1=")" << num(f.py(match.target))
      << R"(" y2=")" << num(f.py(match.target)) << R"(" stroke="gray" stroke-dasharray="4,3"/>)" << '\n';
  }
  if (match.matched) {
    s << R"(<circle cx=")" << num(f.px(match.candidate_x)) << R"(" cy=")" << num(f.py(match.target))
      << R"(" r="4" fill="#d62728"><title>)" << "match at " << num(match.candidate_x) << " ("
      << num(match.relative_percent) << "%)</title></circle>\n";
  }
  s << R"(<text x=")" << kWidth - kRight << R"(" y=")" << kTop + 12 << R"(" text-anchor="end" font-size="11">)"
    << escape(labels.baseline) << " (blue), " << escape(labels.candidate) << " (red)</text>\n"
    << "</svg>\n";
  return s.str();
}

}  // namespace mom
