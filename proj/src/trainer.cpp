#include "mom/trainer.hpp"

#include <chrono>
#include <cmath>

#include "mom/analysis.hpp"
#include "mom/autodiff.hpp"
#include "mom/config.hpp"
#include "mom/ops.hpp"

namespace mom {

std::string to_string(Objective objective) {
  return objective == Objective::uniform ? "uniform" : "transfusion";
}

Objective parse_objective(const std::string& name) {
  if (name == "uniform") return Objective::uniform;
  if (name == "transfusion") return Objective::transfusion;
  throw ConfigError("train.objective", "expected 'uniform' or 'transfusion', got '" + name + "'");
}

void RunConfig::validate() const {
  model.validate();
  data.validate();
  optim.validate();
  if (model.vocab_sizes != data.vocab_sizes()) {
    throw ConfigError("model.vocab_sizes", "must equal the data vocabularies");
  }
  if (model.continuous_dim != data.continuous_dim()) {
    throw ConfigError("model.continuous_dim", "must equal the data patch dimension");
  }
  if (objective == Objective::uniform && data.continuous_dim() > 0) {
    throw ConfigError("train.objective", "the uniform objective needs all-discrete data");
  }
  if (objective == Objective::transfusion && data.continuous_dim() == 0) {
    throw ConfigError("train.objective", "the transfusion objective needs a continuous modality");
  }
  if (!(diffusion_lambda >= 0)) throw ConfigError("train.diffusion_lambda", "must be non-negative");
  if (objective == Objective::transfusion) DiffusionSchedule::cosine(diffusion_steps, schedule_clip);
}

RunConfig RunConfig::matched(ModelConfig model, DataConfig data, OptimConfig optim, Objective objective) {
  RunConfig cfg;
  model.vocab_sizes = data.vocab_sizes();
  model.continuous_dim = data.continuous_dim();
  cfg.model = std::move(model);
  cfg.data = std::move(data);
  cfg.optim = optim;
  cfg.objective = objective;
  return cfg;
}

namespace {

std::vector<Tensor> take_parameters(Model& model) {
  std::vector<Tensor> out;
  model.visit([&](const std::string&, Tensor& t) { out.push_back(std::move(t)); });
  return out;
}

void restore_parameters(Model& model, std::vector<Tensor>& params) {
  std::size_t i = 0;
  model.visit([&](const std::string&, Tensor& t) { t = std::move(params[i++]); });
}

struct DiffusionInput {
  Tensor x_t;
  Tensor eps;
  std::vector<int> timesteps;
};

// One timestep per contiguous continuous segment, noise drawn in row order.
DiffusionInput noise_patches(const Batch& batch, int continuous_id, const DiffusionSchedule& schedule,
                             std::mt19937_64& rng) {
  const std::size_t rows = batch.patches.dim(0), cd = batch.patches.dim(1);
  const auto& positions = batch.mask.partition()[static_cast<std::size_t>(continuous_id)];
  const std::size_t len = batch.mask.length();
  DiffusionInput out{Tensor(Shape{rows, cd}), Tensor(Shape{rows, cd}), std::vector<int>(rows)};
  auto xt = out.x_t.mutable_data();
  auto eps = out.eps.mutable_data();
  std::uniform_int_distribution<std::size_t> pick(1, schedule.T);
  std::size_t r = 0;
  while (r < rows) {
    std::size_t end = r + 1;
    while (end < rows && positions[end] == positions[end - 1] + 1 && positions[end] % len != 0) ++end;
    const std::size_t t = pick(rng);
    std::vector<double> slice(batch.patches.data().begin() + static_cast<std::ptrdiff_t>(r * cd),
                              batch.patches.data().begin() + static_cast<std::ptrdiff_t>(end * cd));
    const Noised noised = ddpm_noise(Tensor(Shape{end - r, cd}, std::move(slice)), t, schedule, rng);
    std::copy(noised.x_t.data().begin(), noised.x_t.data().end(), xt.begin() + static_cast<std::ptrdiff_t>(r * cd));
    std::copy(noised.eps.data().begin(), noised.eps.data().end(), eps.begin() + static_cast<std::ptrdiff_t>(r * cd));
    for (std::size_t i = r; i < end; ++i) out.timesteps[i] = static_cast<int>(t);
    r = end;
  }
  return out;
}

}  // namespace

MetricsLog train(Model& model, const RunConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (model.cfg.vocab_sizes != cfg.model.vocab_sizes || model.cfg.continuous_dim != cfg.model.continuous_dim) {
    throw ConfigError("model", "model does not match the run configuration");
  }
  MetricsLog log;
  for (const ModalitySpec& s : cfg.data.modalities) log.modalities.push_back(s.name);
  log.metadata = to_json(cfg);
  log.metadata["flops_convention"] = "2 FLOPs per multiply-add; embedding lookups free; training step = 3x forward";

  const std::size_t steps = cfg.optim.total_steps;
  if (steps == 0) return log;

  const DataGenerator gen(cfg.data);
  const std::uint64_t seed = cfg.optim.seed;
  const bool diffusion = cfg.objective == Objective::transfusion;
  const DiffusionSchedule schedule =
      diffusion ? DiffusionSchedule::cosine(cfg.diffusion_steps, cfg.schedule_clip) : DiffusionSchedule{};
  const int cont = model.cfg.continuous_id();
  const std::size_t M = cfg.data.modalities.size();

  std::vector<Tensor> initial = take_parameters(model);
  AdamState state = AdamState::like(initial);
  restore_parameters(model, initial);

  const auto start = std::chrono::steady_clock::now();
  std::uint64_t cum_flops = 0;
  for (std::size_t step = 1; step <= steps; ++step) {
    const Batch batch = gen.batch(seed, step);
    std::vector<Tensor> grads;
    MetricsRow row;
    row.step = step;
    row.losses.assign(M, std::numeric_limits<double>::quiet_NaN());
    {
      Tape tape;
      const ModelVars vars = bind_model(tape, model, true);
      ModelInput input{batch.mask, batch.tokens, batch.patches, {}};
      DiffusionInput noised;
      if (diffusion) {
        std::seed_seq noise_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32), 0xD1FFu};
        std::mt19937_64 noise_rng(noise_seq);
        noised = noise_patches(batch, cont, schedule, noise_rng);
        input.patches = noised.x_t;
        input.timesteps = noised.timesteps;
      }
      const ModelOutput out = forward(tape, vars, model.cfg, input, cfg.exec);
      const LmLoss lm = autoregressive_loss(out.logits, batch.tokens, batch.mask);
      for (std::size_t m = 0; m < model.cfg.num_discrete(); ++m) row.losses[m] = lm.breakdown.per_modality[m].mean;
      Var loss = lm.total;
      if (diffusion) {
        const bool has_patches = noised.eps.dim(0) > 0;
        const bool has_text = !std::isnan(lm.total.value().item());
        if (has_patches) {
          const Var dd = ddpm_loss(out.noise_pred, tape.constant(noised.eps));
          row.losses[static_cast<std::size_t>(cont)] = dd.value().item();
          const Var weighted = ops::scale(dd, cfg.diffusion_lambda);
          loss = has_text ? ops::add(lm.total, weighted) : weighted;
        }
      }
      row.total = loss.value().item();
      if (!std::isfinite(row.total)) {
        throw NumericalAbort("non-finite loss at step " + std::to_string(step), step, seed);
      }
      tape.backward(loss);
      grads.reserve(vars.all.size());
      for (const Var& v : vars.all) grads.push_back(tape.grad(v));
    }
    for (const Tensor& g : grads) {
      if (!all_finite(g)) throw NumericalAbort("non-finite gradient at step " + std::to_string(step), step, seed);
    }
    clip_grad_norm(grads, cfg.optim.grad_clip_norm);
    std::vector<Tensor> params = take_parameters(model);
    adamw_step(params, grads, state, cfg.optim, step, cfg.optim.lr_at(step));
    restore_parameters(model, params);

    cum_flops += training_step_flops(model.cfg, batch.mask);
    row.cum_flops = cum_flops;
    if (cfg.wall_time) {
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    log.append(row);
    if (hooks.on_row) hooks.on_row(log.rows.back());
  }
  return log;
}

TrainResult train(const RunConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  TrainResult result{build_model(cfg.model, cfg.optim.seed), {}};
  result.log = train(result.model, cfg, hooks);
  return result;
}

}  // namespace mom
