#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "mom/tensor.hpp"

namespace mom {

struct OptimConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  // Unset means 2% of total_steps (rounded down).
  std::optional<std::size_t> warmup_steps;
  std::size_t total_steps = 1000;
  // <= 0 disables clipping.
  double grad_clip_norm = 1.0;
  // Cosine decay ends at min_lr_ratio * lr.
  double min_lr_ratio = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t resolved_warmup() const;
  // Learning rate for 1-based step: linear warmup to lr, then cosine decay.
  double lr_at(std::size_t step) const;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  // Weight decay applies to matrices only; gains, biases and vectors are exempt.
  std::vector<bool> decay;
  std::size_t step = 0;

  static AdamState like(const std::vector<Tensor>& params);
};

// One decoupled-weight-decay Adam update at 1-based `step` with learning rate
// `lr`: p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p) for decayed
// tensors. Throws NumericalAbort on a non-finite gradient and DimensionError
// on shape disagreement.
void adamw_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
                const OptimConfig& cfg, std::size_t step, double lr);

double global_norm(const std::vector<Tensor>& grads);
// Rescales grads to norm max_norm when their norm exceeds it; returns the
// pre-clip norm. Leaves grads untouched when max_norm <= 0.
double clip_grad_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace mom
