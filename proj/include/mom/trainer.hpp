#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "mom/data.hpp"
#include "mom/errors.hpp"
#include "mom/metrics.hpp"
#include "mom/model.hpp"
#include "mom/objectives.hpp"
#include "mom/optim.hpp"

namespace mom {

// uniform: next-token NLL over every discrete modality.
// transfusion: text NLL plus lambda times the DDPM noise-prediction loss on
// continuous patches.
enum class Objective { uniform, transfusion };

std::string to_string(Objective objective);
// Throws ConfigError("train.objective") for unknown names.
Objective parse_objective(const std::string& name);

// Everything a run depends on. Model vocabularies and continuous width must
// agree with the data config; the model, data stream and diffusion noise are
// all seeded from optim.seed.
struct RunConfig {
  ModelConfig model;
  DataConfig data;
  OptimConfig optim;
  Objective objective = Objective::uniform;
  double diffusion_lambda = 5.0;
  std::size_t diffusion_steps = 1000;
  double schedule_clip = kDefaultScheduleClip;
  ExecOptions exec;
  // Record elapsed seconds per row; off keeps metrics byte-reproducible.
  bool wall_time = false;

  void validate() const;
  // Model config with vocabularies and continuous width taken from the data.
  static RunConfig matched(ModelConfig model, DataConfig data, OptimConfig optim,
                           Objective objective = Objective::uniform);
};

struct TrainHooks {
  // After each logged row.
  std::function<void(const MetricsRow&)> on_row;
};

// Runs cfg.optim.total_steps updates on `model`, logging one row per step
// with the losses measured before that step's update (row 1 is the initial
// model). Throws NumericalAbort on a non-finite loss or gradient; `model` is
// then left at the last good parameters and the exception carries the step
// and the data seed, which together reproduce the offending batch.
MetricsLog train(Model& model, const RunConfig& cfg, const TrainHooks& hooks = {});

// Builds the model from optim.seed and trains it.
struct TrainResult {
  Model model;
  MetricsLog log;
};
TrainResult train(const RunConfig& cfg, const TrainHooks& hooks = {});

}  // namespace mom
