#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace mom {

struct MetricsRow {
  std::size_t step = 0;
  // One entry per modality in MetricsLog::modalities; NaN when the modality
  // had no loss terms in that step's batch.
  std::vector<double> losses;
  double total = 0.0;
  std::uint64_t cum_flops = 0;
  double seconds = 0.0;
};

// Rows have strictly increasing steps and nondecreasing cumulative FLOPs.
struct MetricsLog {
  std::vector<std::string> modalities;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<MetricsRow> rows;

  // Throws ValidationError when the row breaks the ordering invariants.
  void append(MetricsRow row);
  std::size_t modality_index(const std::string& name) const;

  // Long format, header "step,modality,loss,total_loss,cum_flops,seconds",
  // one line per (step, modality); doubles printed with 17 significant digits.
  void write_csv(std::ostream& out) const;
  static MetricsLog read_csv(std::istream& in);

  nlohmann::json to_json() const;
  static MetricsLog from_json(const nlohmann::json& j);
};

// Mean total loss over the trailing `fraction` of rows (at least one row).
// NaN for an empty log.
double final_average_loss(const MetricsLog& log, double fraction = 0.1);
// Same, for one modality's column, skipping NaN entries.
double final_modality_loss(const MetricsLog& log, std::size_t modality, double fraction = 0.1);

}  // namespace mom
