#pragma once

#include <string>

#include "mom/analysis.hpp"

namespace mom {

struct PlotLabels {
  std::string title = "Training loss";
  std::string x_axis = "step";
  std::string baseline = "baseline";
  std::string candidate = "candidate";
};

// Standalone SVG: one <path> per smoothed curve, a dashed <line> at the match
// target and a <circle> marker at the candidate's match point when matched.
std::string render_match_svg(const LossCurve& baseline, const LossCurve& candidate, const MatchResult& match,
                             const PlotLabels& labels = {});

}  // namespace mom
