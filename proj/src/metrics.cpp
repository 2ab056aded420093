#include "mom/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "mom/errors.hpp"

namespace mom {

namespace {

std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw ValidationError("metrics: malformed number '" + s + "'");
  return v;
}

// JSON has no NaN; absent losses are written as null.
nlohmann::json loss_json(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
double loss_from_json(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

void MetricsLog::append(MetricsRow row) {
  if (row.losses.size() != modalities.size()) {
    throw ValidationError("metrics: row has " + std::to_string(row.losses.size()) + " losses for " +
                          std::to_string(modalities.size()) + " modalities");
  }
  if (!rows.empty()) {
    if (row.step <= rows.back().step) throw ValidationError("metrics: steps must strictly increase");
    if (row.cum_flops < rows.back().cum_flops) throw ValidationError("metrics: cumulative FLOPs decreased");
  }
  rows.push_back(std::move(row));
}

std::size_t MetricsLog::modality_index(const std::string& name) const {
  auto it = std::find(modalities.begin(), modalities.end(), name);
  if (it == modalities.end()) throw ValidationError("metrics: no modality named '" + name + "'");
  return static_cast<std::size_t>(it - modalities.begin());
}

void MetricsLog::write_csv(std::ostream& out) const {
  out << "step,modality,loss,total_loss,cum_flops,seconds\n";
  for (const MetricsRow& r : rows) {
    for (std::size_t m = 0; m < modalities.size(); ++m) {
      out << r.step << ',' << modalities[m] << ',' << fmt17(r.losses[m]) << ',' << fmt17(r.total) << ','
          << r.cum_flops << ',' << fmt17(r.seconds) << '\n';
    }
  }
}

MetricsLog MetricsLog::read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "step,modality,loss,total_loss,cum_flops,seconds") {
    throw ValidationError("metrics: unexpected CSV header");
  }
  MetricsLog log;
  std::map<std::string, std::size_t> index;
  std::vector<std::tuple<std::size_t, std::string, double, double, std::uint64_t, double>> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw ValidationError("metrics: malformed CSV line '" + line + "'");
    try {
      records.emplace_back(std::stoull(cells[0]), cells[1], parse_double(cells[2]), parse_double(cells[3]),
                           std::stoull(cells[4]), parse_double(cells[5]));
    } catch (const std::logic_error&) {
      throw ValidationError("metrics: malformed CSV line '" + line + "'");
    }
    if (index.emplace(cells[1], index.size()).second) log.modalities.push_back(cells[1]);
  }
  for (const auto& [step, name, loss, total, flops, seconds] : records) {
    if (log.rows.empty() || log.rows.back().step != step) {
      MetricsRow row;
      row.step = step;
      row.losses.assign(log.modalities.size(), std::numeric_limits<double>::quiet_NaN());
      row.total = total;
      row.cum_flops = flops;
      row.seconds = seconds;
      log.append(std::move(row));
    }
    log.rows.back().losses[index.at(name)] = loss;
  }
  return log;
}

nlohmann::json MetricsLog::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const MetricsRow& r : rows) {
    nlohmann::json losses = nlohmann::json::array();
    for (double v : r.losses) losses.push_back(loss_json(v));
    rows_json.push_back({{"step", r.step},
                         {"losses", losses},
                         {"total_loss", loss_json(r.total)},
                         {"cum_flops", r.cum_flops},
                         {"seconds", r.seconds}});
  }
  return {{"modalities", modalities}, {"metadata", metadata}, {"rows", rows_json}};
}

MetricsLog MetricsLog::from_json(const nlohmann::json& j) {
  MetricsLog log;
  try {
    log.modalities = j.at("modalities").get<std::vector<std::string>>();
    log.metadata = j.value("metadata", nlohmann::json::object());
    for (const auto& r : j.at("rows")) {
      MetricsRow row;
      row.step = r.at("step").get<std::size_t>();
      for (const auto& v : r.at("losses")) row.losses.push_back(loss_from_json(v));
      row.total = loss_from_json(r.at("total_loss"));
      row.cum_flops = r.at("cum_flops").get<std::uint64_t>();
      row.seconds = r.at("seconds").get<double>();
      log.append(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("metrics: malformed JSON: ") + e.what());
  }
  return log;
}

namespace {

template <typename Value>
double trailing_mean(const MetricsLog& log, double fraction, Value value) {
  if (log.rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto n = log.rows.size();
  const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = n - take; i < n; ++i) {
    const double v = value(log.rows[i]);
    if (std::isnan(v)) continue;
    sum += v;
    ++count;
  }
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

}  // namespace

double final_average_loss(const MetricsLog& log, double fraction) {
  return trailing_mean(log, fraction, [](const MetricsRow& r) { return r.total; });
}

double final_modality_loss(const MetricsLog& log, std::size_t modality, double fraction) {
  return trailing_mean(log, fraction, [modality](const MetricsRow& r) { return r.losses.at(modality); });
}

}  // namespace mom
