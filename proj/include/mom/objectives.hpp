#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "mom/autodiff.hpp"
#include "mom/routing.hpp"
#include "mom/tensor.hpp"

namespace mom {

// Endpoint clip of the cosine schedule. At T = 1000 a clip of 1e-3 makes
// alpha_bar(T-1) == alpha_bar(T); 1e-4 keeps the table strictly decreasing.
inline constexpr double kDefaultScheduleClip = 1e-4;

// alpha_bar_t = cos^2(min(t/T, 1 - clip) * pi/2). Throws RangeError for t > T.
double cosine_alpha_bar(std::size_t t, std::size_t T, double clip = kDefaultScheduleClip);

struct DiffusionSchedule {
  std::size_t T = 0;
  double clip = kDefaultScheduleClip;
  std::vector<double> alpha_bar;  // t = 0..T

  // Throws ConfigError when T = 0 or the table is not strictly decreasing.
  static DiffusionSchedule cosine(std::size_t T = 1000, double clip = kDefaultScheduleClip);
  double at(std::size_t t) const;
};

struct Noised {
  Tensor x_t;
  Tensor eps;
};

// x_t = sqrt(ab) x0 + sqrt(1 - ab) eps, eps ~ N(0, 1).
Noised ddpm_noise(const Tensor& x0, std::size_t t, const DiffusionSchedule& schedule, std::mt19937_64& rng);
// x0 = (x_t - sqrt(1 - ab) eps) / sqrt(ab). Throws DomainError when ab = 0.
Tensor ddpm_reconstruct(const Tensor& x_t, const Tensor& eps, std::size_t t, const DiffusionSchedule& schedule);

struct ModalityLoss {
  double mean = 0.0;  // NaN when count == 0
  std::size_t count = 0;
  bool defined() const noexcept { return count > 0; }
};

struct LossBreakdown {
  // Indexed by modality id. Continuous modalities carry the DDPM loss with
  // count = number of patch positions.
  std::vector<ModalityLoss> per_modality;
  double total = 0.0;
  double lambda = 0.0;

  // Token-weighted mean over defined discrete entries listed in `modalities`.
  double weighted_mean(std::span<const int> modalities) const;
};

// Target of position t is the token at t+1 when both sit in the same sequence
// and modality; -1 otherwise. Continuous positions never have targets.
std::vector<int> next_token_targets(std::span<const int> tokens, const ModalityMask& mask, std::size_t num_discrete);

struct LmLoss {
  Var total;  // token-weighted mean NLL over all discrete targets
  LossBreakdown breakdown;
};

// logits[m] rows follow mask.partition()[m].
LmLoss autoregressive_loss(std::span<const Var> logits, std::span<const int> tokens, const ModalityMask& mask);
LossBreakdown autoregressive_loss(std::span<const Tensor> logits, std::span<const int> tokens,
                                  const ModalityMask& mask);

Var ddpm_loss(const Var& eps_pred, const Var& eps);
double ddpm_loss(const Tensor& eps_pred, const Tensor& eps);

// lm_total + lambda * ddpm. lm_total is the discrete NLL mean, which in the
// text-plus-patches setting is the text mean. Throws ParameterError for lambda < 0.
double combined_loss(double lm_total, double ddpm, double lambda);
double combined_loss(const LossBreakdown& lm, double ddpm, double lambda);

}  // namespace mom
