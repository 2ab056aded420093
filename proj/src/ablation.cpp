#include "mom/ablation.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "mom/analysis.hpp"

namespace mom {

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
  std::string s = buf;
  if (s[0] == '-' && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

double AblationReport::baseline_seed_std_percent() const {
  if (rows.empty() || rows[0].seed_losses.size() < 2 || rows[0].failed) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const auto& v = rows[0].seed_losses;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / mean * 100.0;
}

namespace {

std::string row_label(const SparsityConfig& s) { return s.bits() == 0 ? "none (baseline)" : s.label(); }

// Display width of UTF-8 text: one column per code point.
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80 ? 1 : 0;
  return n;
}

std::string pad(const std::string& s, std::size_t width) {
  const std::size_t w = display_width(s);
  return w >= width ? s : s + std::string(width - w, ' ');
}

}  // namespace

void AblationReport::write_csv(std::ostream& out) const {
  out << "label,in_proj,x_proj,dt_proj,out_proj,avg_loss,gain_percent,status\n";
  for (const AblationRow& r : rows) {
    out << r.config.label() << ',' << r.config.in_proj << ',' << r.config.x_proj << ',' << r.config.dt_proj << ','
        << r.config.out_proj << ',';
    if (r.failed) {
      out << ",,failed\n";
    } else {
      out << format_fixed(r.avg_loss, 4) << ',' << format_fixed(r.gain, 2) << ",ok\n";
    }
  }
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const AblationRow& r : rows) {
    nlohmann::json row = {{"label", r.config.label()}, {"name", r.config.name()}, {"failed", r.failed}};
    if (r.failed) {
      row["failure"] = r.failure;
    } else {
      row["seed_losses"] = r.seed_losses;
      row["avg_loss"] = r.avg_loss;
      row["gain_percent"] = r.gain;
    }
    rows_json.push_back(std::move(row));
  }
  const double band = baseline_seed_std_percent();
  return {{"seeds", seeds},
          {"final_fraction", final_fraction},
          {"baseline_seed_std_percent", std::isnan(band) ? nlohmann::json() : nlohmann::json(band)},
          {"rows", rows_json}};
}

std::string AblationReport::text_table() const {
  std::ostringstream out;
  const std::size_t w = 18;
  out << pad("Configuration", w) << pad("Loss", 10) << "Gain (%)\n";
  for (const AblationRow& r : rows) {
    out << pad(row_label(r.config), w);
    if (r.failed) {
      out << pad("failed", 10) << r.failure << '\n';
    } else {
      out << pad(format_fixed(r.avg_loss, 4), 10) << format_fixed(r.gain, 2) << '\n';
    }
  }
  return out.str();
}

AblationReport ablation_sweep(const RunConfig& base, const AblationOptions& options) {
  base.validate();
  if (options.seeds.empty()) throw ConfigError("ablation.seeds", "at least one seed is required");
  const auto configs = enumerate_sparsity_configs();
  AblationReport report;
  report.seeds = options.seeds;
  report.final_fraction = options.final_fraction;
  report.rows.resize(configs.size());
  const std::size_t S = options.seeds.size();
  for (std::size_t c = 0; c < configs.size(); ++c) {
    report.rows[c].config = configs[c];
    report.rows[c].seed_losses.assign(S, std::numeric_limits<double>::quiet_NaN());
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (std::size_t task = next++; task < configs.size() * S; task = next++) {
      const std::size_t c = task / S, s = task % S;
      RunConfig cfg = base;
      cfg.model.sparsity = configs[c];
      cfg.optim.seed = options.seeds[s];
      try {
        const TrainResult result = train(cfg);
        const double loss = final_average_loss(result.log, options.final_fraction);
        std::lock_guard lock(mu);
        report.rows[c].seed_losses[s] = loss;
        if (options.on_run) options.on_run(configs[c], options.seeds[s], result.log);
      } catch (const NumericalAbort& e) {
        std::lock_guard lock(mu);
        report.rows[c].failed = true;
        report.rows[c].failure = "seed " + std::to_string(options.seeds[s]) + ": " + e.what();
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (AblationRow& r : report.rows) {
    if (r.failed) continue;
    double sum = 0.0;
    for (double v : r.seed_losses) sum += v;
    r.avg_loss = sum / static_cast<double>(S);
  }
  const AblationRow& baseline = report.rows[0];
  for (AblationRow& r : report.rows) {
    if (r.failed || baseline.failed) continue;
    r.gain = &r == &baseline ? 0.0 : performance_gain(baseline.avg_loss, r.avg_loss);
  }
  return report;
}

}  // namespace mom
