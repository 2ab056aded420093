#include "mom/objectives.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mom/errors.hpp"
#include "mom/ops.hpp"

namespace mom {

double cosine_alpha_bar(std::size_t t, std::size_t T, double clip) {
  if (T == 0) throw ParameterError("cosine_alpha_bar: T must be positive");
  if (t > T) throw RangeError("cosine_alpha_bar: t=" + std::to_string(t) + " exceeds T=" + std::to_string(T));
  const double frac = std::min(static_cast<double>(t) / static_cast<double>(T), 1.0 - clip);
  const double c = std::cos(frac * std::numbers::pi / 2.0);
  return c * c;
}

DiffusionSchedule DiffusionSchedule::cosine(std::size_t T, double clip) {
  if (T == 0) throw ConfigError("diffusion.T", "must be positive");
  if (!(clip >= 0.0 && clip < 1.0)) throw ConfigError("diffusion.clip", "must lie in [0, 1)");
  DiffusionSchedule s;
  s.T = T;
  s.clip = clip;
  s.alpha_bar.resize(T + 1);
  for (std::size_t t = 0; t <= T; ++t) s.alpha_bar[t] = cosine_alpha_bar(t, T, clip);
  for (std::size_t t = 1; t <= T; ++t) {
    if (!(s.alpha_bar[t] < s.alpha_bar[t - 1])) {
      throw ConfigError("diffusion.clip", "alpha_bar is not strictly decreasing at t=" + std::to_string(t) +
                                              " (clip too large for T=" + std::to_string(T) + ")");
    }
  }
  return s;
}

double DiffusionSchedule::at(std::size_t t) const {
  if (t > T) throw RangeError("DiffusionSchedule: t=" + std::to_string(t) + " exceeds T=" + std::to_string(T));
  return alpha_bar[t];
}

Noised ddpm_noise(const Tensor& x0, std::size_t t, const DiffusionSchedule& schedule, std::mt19937_64& rng) {
  const double ab = schedule.at(t);
  const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
  std::normal_distribution<double> normal(0.0, 1.0);
  Noised out{Tensor(x0.shape()), Tensor(x0.shape())};
  auto xt = out.x_t.mutable_data();
  auto eps = out.eps.mutable_data();
  for (std::size_t i = 0; i < x0.size(); ++i) {
    eps[i] = normal(rng);
    xt[i] = sa * x0[i] + sn * eps[i];
  }
  return out;
}

Tensor ddpm_reconstruct(const Tensor& x_t, const Tensor& eps, std::size_t t, const DiffusionSchedule& schedule) {
  if (x_t.shape() != eps.shape()) {
    throw DimensionError("ddpm_reconstruct: x_t " + shape_string(x_t.shape()) + " vs eps " + shape_string(eps.shape()));
  }
  const double ab = schedule.at(t);
  if (ab == 0.0) throw DomainError("ddpm_reconstruct: alpha_bar is 0 at t=" + std::to_string(t));
  const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
  Tensor x0(x_t.shape());
  auto o = x0.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (x_t[i] - sn * eps[i]) / sa;
  return x0;
}

double LossBreakdown::weighted_mean(std::span<const int> modalities) const {
  double sum = 0.0;
  std::size_t count = 0;
  for (int m : modalities) {
    const ModalityLoss& l = per_modality.at(static_cast<std::size_t>(m));
    if (!l.defined()) continue;
    sum += l.mean * static_cast<double>(l.count);
    count += l.count;
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

std::vector<int> next_token_targets(std::span<const int> tokens, const ModalityMask& mask, std::size_t num_discrete) {
  if (tokens.size() != mask.tokens()) {
    throw DimensionError("next_token_targets: " + std::to_string(tokens.size()) + " tokens for " +
                         std::to_string(mask.tokens()) + " positions");
  }
  std::vector<int> targets(tokens.size(), -1);
  const std::size_t len = mask.length();
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    if (pos % len == len - 1) continue;
    const int m = mask.ids()[pos];
    if (static_cast<std::size_t>(m) >= num_discrete || mask.ids()[pos + 1] != m) continue;
    targets[pos] = tokens[pos + 1];
  }
  return targets;
}

namespace {

// Per-modality target lists in partition order, and their non-negative counts.
std::vector<std::vector<int>> modality_targets(std::span<const int> tokens, const ModalityMask& mask,
                                               std::size_t num_discrete, std::vector<std::size_t>& counts) {
  const std::vector<int> all = next_token_targets(tokens, mask, num_discrete);
  std::vector<std::vector<int>> out(num_discrete);
  counts.assign(num_discrete, 0);
  for (std::size_t m = 0; m < num_discrete; ++m) {
    for (std::size_t pos : mask.partition()[m]) {
      out[m].push_back(all[pos]);
      if (all[pos] >= 0) ++counts[m];
    }
  }
  return out;
}

}  // namespace

LmLoss autoregressive_loss(std::span<const Var> logits, std::span<const int> tokens, const ModalityMask& mask) {
  if (logits.empty()) throw DimensionError("autoregressive_loss: no discrete modalities");
  const std::size_t D = logits.size();
  std::vector<std::size_t> counts;
  const auto targets = modality_targets(tokens, mask, D, counts);
  Tape& tape = logits[0].tape();

  LmLoss out;
  out.breakdown.per_modality.resize(mask.num_modalities());
  std::vector<Var> sums;
  std::size_t total_count = 0;
  for (std::size_t m = 0; m < D; ++m) {
    ModalityLoss& l = out.breakdown.per_modality[m];
    l.count = counts[m];
    if (counts[m] == 0) {
      l.mean = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    Var s = ops::cross_entropy_sum(logits[m], targets[m]);
    l.mean = s.value().item() / static_cast<double>(counts[m]);
    sums.push_back(s);
    total_count += counts[m];
  }
  for (std::size_t m = D; m < mask.num_modalities(); ++m) {
    out.breakdown.per_modality[m].mean = std::numeric_limits<double>::quiet_NaN();
  }
  if (sums.empty()) {
    out.total = tape.constant(Tensor::scalar(std::numeric_limits<double>::quiet_NaN()));
    out.breakdown.total = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const std::vector<double> coeffs(sums.size(), 1.0 / static_cast<double>(total_count));
  out.total = ops::weighted_sum(sums, coeffs);
  out.breakdown.total = out.total.value().item();
  return out;
}

LossBreakdown autoregressive_loss(std::span<const Tensor> logits, std::span<const int> tokens,
                                  const ModalityMask& mask) {
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : logits) vars.push_back(tape.constant(t));
  return autoregressive_loss(vars, tokens, mask).breakdown;
}

Var ddpm_loss(const Var& eps_pred, const Var& eps) {
  if (eps_pred.shape() != eps.shape()) {
    throw DimensionError("ddpm_loss: prediction " + shape_string(eps_pred.shape()) + " vs noise " +
                         shape_string(eps.shape()));
  }
  return ops::mse(eps_pred, eps);
}

double ddpm_loss(const Tensor& eps_pred, const Tensor& eps) {
  Tape tape;
  return ddpm_loss(tape.constant(eps_pred), tape.constant(eps)).value().item();
}

double combined_loss(double lm_total, double ddpm, double lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("combined_loss: lambda must be non-negative");
  return lm_total + lambda * ddpm;
}

double combined_loss(const LossBreakdown& lm, double ddpm, double lambda) {
  return combined_loss(lm.total, ddpm, lambda);
}

}  // namespace mom
