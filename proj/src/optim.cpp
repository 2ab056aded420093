#include "mom/optim.hpp"

#include <cmath>
#include <numbers>

#include "mom/errors.hpp"

namespace mom {

void OptimConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("optim.lr", "must be positive");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("optim.beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("optim.beta2", "must lie in [0, 1)");
  if (!(eps >= 0)) throw ConfigError("optim.eps", "must be non-negative");
  if (!(weight_decay >= 0)) throw ConfigError("optim.weight_decay", "must be non-negative");
  if (!(min_lr_ratio >= 0 && min_lr_ratio <= 1)) throw ConfigError("optim.min_lr_ratio", "must lie in [0, 1]");
  if (warmup_steps && *warmup_steps > total_steps) {
    throw ConfigError("optim.warmup_steps", "cannot exceed total_steps");
  }
}

std::size_t OptimConfig::resolved_warmup() const {
  return warmup_steps ? *warmup_steps : total_steps / 50;
}

double OptimConfig::lr_at(std::size_t step) const {
  const std::size_t warm = resolved_warmup();
  if (step <= warm && warm > 0) return lr * static_cast<double>(step) / static_cast<double>(warm);
  if (total_steps <= warm) return lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warm) / static_cast<double>(total_steps - warm));
  const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  return lr * (min_lr_ratio + (1.0 - min_lr_ratio) * cosine);
}

AdamState AdamState::like(const std::vector<Tensor>& params) {
  AdamState s;
  for (const Tensor& p : params) {
    s.m.push_back(Tensor::zeros(p.shape()));
    s.v.push_back(Tensor::zeros(p.shape()));
    s.decay.push_back(p.rank() >= 2);
  }
  return s;
}

void adamw_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state,
                const OptimConfig& cfg, std::size_t step, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size() ||
      state.decay.size() != params.size()) {
    throw DimensionError("adamw_step: params, grads and state disagree in count");
  }
  if (step == 0) throw ParameterError("adamw_step: step is 1-based");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape()) {
      throw DimensionError("adamw_step: shape mismatch at parameter " + std::to_string(i));
    }
    if (!all_finite(grads[i])) {
      throw NumericalAbort("adamw_step: non-finite gradient at parameter " + std::to_string(i), step, 0);
    }
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto m = state.m[i].mutable_data();
    auto v = state.v[i].mutable_data();
    const auto g = grads[i].data();
    const double decay = state.decay[i] ? 1.0 - lr * cfg.weight_decay : 1.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      p[j] = p[j] * decay - lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  state.step = step;
}

double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const Tensor& g : grads) {
    for (double x : g.data()) s += x * x;
  }
  return std::sqrt(s);
}

double clip_grad_norm(std::vector<Tensor>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& x : g.mutable_data()) x *= scale;
    }
  }
  return norm;
}

}  // namespace mom
