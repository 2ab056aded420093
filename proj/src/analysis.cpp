#include "mom/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "mom/errors.hpp"

namespace mom {

double performance_gain(double loss_dense, double loss_mixture) {
  if (!(loss_dense > 0)) throw DomainError("performance_gain: dense loss must be positive");
  return (loss_dense - loss_mixture) / loss_dense * 100.0;
}

std::size_t LossCurve::default_window(std::size_t points) {
  return std::max<std::size_t>(1, points / 50);
}

LossCurve::LossCurve(std::vector<double> x, std::vector<double> loss, std::size_t window)
    : x_(std::move(x)), loss_(std::move(loss)) {
  if (x_.size() != loss_.size()) throw ValidationError("LossCurve: x and loss lengths differ");
  if (x_.size() < 2) throw ValidationError("LossCurve: needs at least 2 points");
  for (std::size_t i = 0; i < x_.size(); ++i) {
    if (!std::isfinite(loss_[i])) throw ValidationError("LossCurve: non-finite loss");
    if (i > 0 && !(x_[i] > x_[i - 1])) throw ValidationError("LossCurve: x must strictly increase");
  }
  window_ = window == 0 ? default_window(x_.size()) : window;
  smoothed_.resize(loss_.size());
  for (std::size_t i = 0; i < loss_.size(); ++i) {
    // Each window is summed afresh so the value depends only on its own points.
    const std::size_t lo = i + 1 >= window_ ? i + 1 - window_ : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += loss_[j];
    smoothed_[i] = s / static_cast<double>(i + 1 - lo);
  }
}

LossCurve LossCurve::from_log(const MetricsLog& log, std::optional<std::size_t> modality, bool by_flops,
                              std::size_t window) {
  std::vector<double> x, loss;
  for (const MetricsRow& r : log.rows) {
    const double v = modality ? r.losses.at(*modality) : r.total;
    if (std::isnan(v)) continue;
    x.push_back(by_flops ? static_cast<double>(r.cum_flops) : static_cast<double>(r.step));
    loss.push_back(v);
  }
  return LossCurve(std::move(x), std::move(loss), window);
}

std::optional<double> LossCurve::first_reach(double target) const {
  for (std::size_t i = 0; i < smoothed_.size(); ++i) {
    if (smoothed_[i] > target) continue;
    if (i == 0) return x_[0];
    const double hi = smoothed_[i - 1], lo = smoothed_[i];
    const double frac = (hi - target) / (hi - lo);
    return x_[i - 1] + frac * (x_[i] - x_[i - 1]);
  }
  return std::nullopt;
}

MatchResult loss_match(const LossCurve& baseline, const LossCurve& candidate, std::optional<double> target) {
  if (baseline.window() != candidate.window()) {
    throw ValidationError("loss_match: curves must be smoothed with the same window");
  }
  MatchResult r;
  r.target = target ? *target : baseline.final_smoothed();
  const auto base_x = baseline.first_reach(r.target);
  if (!base_x) throw ValidationError("loss_match: baseline never reaches the target");
  r.baseline_x = *base_x;
  r.candidate_best = *std::min_element(candidate.smoothed().begin(), candidate.smoothed().end());
  if (const auto cand_x = candidate.first_reach(r.target)) {
    r.matched = true;
    r.candidate_x = *cand_x;
    r.relative_percent = r.candidate_x / r.baseline_x * 100.0;
  }
  return r;
}

FlopsBreakdown flops_breakdown(const ModelConfig& cfg) {
  cfg.validate();
  const BlockDims dims = cfg.block_dims();
  const std::uint64_t f = dims.f, d = dims.d, n = dims.n, r = dims.r, k = dims.k, L = cfg.layers;
  FlopsBreakdown out;
  out.in_proj = L * 2 * f * 2 * d;
  out.conv = L * 2 * d * k;
  out.x_proj = L * 2 * d * (r + 2 * n);
  out.dt_proj = L * 2 * r * d;
  // Discretizing B (1 multiply-add) plus the state update (2) per (d, n) lane.
  out.scan = L * 6 * d * n;
  // Gate multiply and residual add per channel.
  out.gate = L * 2 * d;
  out.out_proj = L * 2 * d * f;
  for (std::size_t v : cfg.vocab_sizes) out.modality.push_back(2 * f * v);
  if (cfg.has_continuous()) out.modality.push_back(2 * 2 * cfg.continuous_dim * f);
  return out;
}

double flops_per_token(const ModelConfig& cfg, std::span<const double> mix) {
  const FlopsBreakdown b = flops_breakdown(cfg);
  const std::size_t M = b.modality.size();
  if (!mix.empty() && mix.size() != M) throw DimensionError("flops_per_token: mix needs one weight per modality");
  double out = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    const double w = mix.empty() ? 1.0 / static_cast<double>(M) : mix[m];
    out += w * static_cast<double>(b.token(m));
  }
  return out;
}

std::uint64_t flops_for_tokens(const ModelConfig& cfg, std::span<const std::size_t> counts) {
  const FlopsBreakdown b = flops_breakdown(cfg);
  if (counts.size() != b.modality.size()) {
    throw DimensionError("flops_for_tokens: counts need one entry per modality");
  }
  std::uint64_t out = 0;
  for (std::size_t m = 0; m < counts.size(); ++m) out += counts[m] * b.token(m);
  return out;
}

std::uint64_t training_step_flops(const ModelConfig& cfg, const ModalityMask& mask) {
  std::vector<std::size_t> counts(mask.num_modalities());
  for (std::size_t m = 0; m < counts.size(); ++m) counts[m] = mask.count(m);
  return 3 * flops_for_tokens(cfg, counts);
}

}  // namespace mom
