#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mom/metrics.hpp"
#include "mom/model.hpp"
#include "mom/routing.hpp"

namespace mom {

// (dense - mixture) / dense * 100. Throws DomainError when dense <= 0.
double performance_gain(double loss_dense, double loss_mixture);

// Trailing moving average over `window` points; x strictly increasing.
class LossCurve {
 public:
  // window 0 selects default_window(points). Throws ValidationError for fewer
  // than 2 points, non-increasing x or non-finite losses.
  LossCurve(std::vector<double> x, std::vector<double> loss, std::size_t window = 0);

  static std::size_t default_window(std::size_t points);
  // Curve of one modality (NaN rows dropped) or, with no modality, of the
  // total loss, against step or cumulative FLOPs.
  static LossCurve from_log(const MetricsLog& log, std::optional<std::size_t> modality, bool by_flops = false,
                            std::size_t window = 0);

  const std::vector<double>& x() const noexcept { return x_; }
  const std::vector<double>& loss() const noexcept { return loss_; }
  const std::vector<double>& smoothed() const noexcept { return smoothed_; }
  std::size_t window() const noexcept { return window_; }
  double final_smoothed() const { return smoothed_.back(); }

  // Smallest x at which the smoothed curve reaches `target`, linearly
  // interpolated between points; nullopt when it never does.
  std::optional<double> first_reach(double target) const;

 private:
  std::vector<double> x_, loss_, smoothed_;
  std::size_t window_;
};

struct MatchResult {
  double target = 0.0;
  bool matched = false;
  // Candidate x at the target; baseline x at the target.
  double candidate_x = 0.0;
  double baseline_x = 0.0;
  // candidate_x / baseline_x * 100 when matched.
  double relative_percent = 0.0;
  double candidate_best = 0.0;
};

// Target defaults to the baseline's final smoothed loss. The baseline's own x
// at the target is its first reach, so matching a curve against itself gives
// exactly 100%. Throws ValidationError when the baseline never reaches an
// explicit target or the two curves use different windows.
MatchResult loss_match(const LossCurve& baseline, const LossCurve& candidate, std::optional<double> target = {});

// Analytic forward FLOPs (2 per multiply-add, lookups free). Block terms are
// per token summed over layers; `modality` terms cover the heads, plus
// patch_in and noise_head for the continuous modality.
struct FlopsBreakdown {
  std::uint64_t in_proj = 0, conv = 0, x_proj = 0, dt_proj = 0, scan = 0, gate = 0, out_proj = 0;
  std::vector<std::uint64_t> modality;

  std::uint64_t block() const noexcept { return in_proj + conv + x_proj + dt_proj + scan + gate + out_proj; }
  std::uint64_t token(std::size_t m) const { return block() + modality.at(m); }
};
FlopsBreakdown flops_breakdown(const ModelConfig& cfg);

// Expected forward FLOPs per token under a modality mix (fractions, one per
// modality); an empty mix weighs modalities uniformly. Independent of the
// sparsity configuration.
double flops_per_token(const ModelConfig& cfg, std::span<const double> mix = {});
// Exact forward FLOPs for counts[m] tokens of each modality.
std::uint64_t flops_for_tokens(const ModelConfig& cfg, std::span<const std::size_t> counts);
// Forward plus backward, counted as 3x forward.
std::uint64_t training_step_flops(const ModelConfig& cfg, const ModalityMask& mask);

}  // namespace mom
