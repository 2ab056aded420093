#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mom/trainer.hpp"

namespace mom {

struct AblationRow {
  SparsityConfig config;
  // Final average training loss per seed, in AblationOptions::seeds order.
  std::vector<double> seed_losses;
  double avg_loss = 0.0;
  // Against the all-shared row; exactly 0 for that row.
  double gain = 0.0;
  bool failed = false;
  std::string failure;
};

struct AblationReport {
  // enumerate_sparsity_configs() order; row 0 is the all-shared baseline.
  std::vector<AblationRow> rows;
  std::vector<std::uint64_t> seeds;
  double final_fraction = 0.1;

  // Sample standard deviation of the baseline's per-seed losses as a
  // percentage of its mean; NaN with fewer than two seeds.
  double baseline_seed_std_percent() const;

  // Header "label,in_proj,x_proj,dt_proj,out_proj,avg_loss,gain_percent,status";
  // losses to 4 decimals, gains to 2.
  void write_csv(std::ostream& out) const;
  // Aligned table with Configuration, Loss and Gain (%) columns.
  std::string text_table() const;
  // Full-precision rows with per-seed losses; the noise band is null with
  // fewer than two seeds.
  nlohmann::json to_json() const;
};

struct AblationOptions {
  std::vector<std::uint64_t> seeds{1};
  // Concurrent runs; each run is independent so results do not depend on it.
  std::size_t jobs = 1;
  double final_fraction = 0.1;
  // Called after each finished run, possibly from a worker thread.
  std::function<void(const SparsityConfig&, std::uint64_t seed, const MetricsLog&)> on_run;
};

// Trains every sparsity configuration of `base.model` on every seed (seed
// replaces base.optim.seed). Aborted runs mark their row failed and the
// sweep continues.
AblationReport ablation_sweep(const RunConfig& base, const AblationOptions& options);

// "0.00" style with negative zero folded to "0.00".
std::string format_fixed(double value, int decimals);

}  // namespace mom
