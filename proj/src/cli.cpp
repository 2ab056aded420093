#include "mom/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mom/ablation.hpp"
#include "mom/analysis.hpp"
#include "mom/checkpoint.hpp"
#include "mom/data.hpp"
#include "mom/errors.hpp"
#include "mom/plot.hpp"

namespace mom {

namespace fs = std::filesystem;
using nlohmann::json;

json RunManifest::to_json() const {
  return {{"tool_version", tool_version}, {"command", command},        {"seed", seed},
          {"seeds", seeds},               {"output_dir", output_dir}, {"config", mom::to_json(config)}};
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError("manifest", e.what());
  }
  m.config = tool_config_from_json(j.at("config"));
  return m;
}

void RunManifest::save(const fs::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("output", "cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest", "cannot read " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("manifest", path.string() + ": " + e.what());
  }
}

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
};

ToolConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.sets;
  if (c.steps) overrides.push_back("optim.steps=" + std::to_string(*c.steps));
  if (c.seed) overrides.push_back("optim.seed=" + std::to_string(*c.seed));
  if (c.config_path.empty()) {
    auto tree = parse_ini("");
    for (const auto& o : overrides) apply_override(tree, o);
    return tool_config_from_tree(tree);
  }
  if (!fs::exists(c.config_path)) throw ConfigError("config", "config file not found: " + c.config_path);
  return load_tool_config(c.config_path, overrides);
}

fs::path output_dir(const Common& c, const std::string& command, std::uint64_t seed) {
  if (!c.out_dir.empty()) return c.out_dir;
  const char* root = std::getenv("MOM_OUTPUT_ROOT");
  const std::string stem = c.config_path.empty() ? "default" : fs::path(c.config_path).stem().string();
  return fs::path(root && *root ? root : "runs") / (command + "-" + stem + "-seed" + std::to_string(seed));
}

fs::path prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("output", "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("output", "cannot write " + path.string());
  out << text;
}

std::string fixed(double v, int decimals) { return std::isnan(v) ? "n/a" : format_fixed(v, decimals); }

void add_common(CLI::App* app, Common& c, bool with_steps) {
  app->add_option("-c,--config", c.config_path, "INI config file");
  app->add_option("--set", c.sets, "Override section.key=value (repeatable)");
  app->add_option("-o,--out", c.out_dir, "Output directory");
  if (with_steps) {
    app->add_option("--steps", c.steps, "Override optim.steps");
    app->add_option("--seed", c.seed, "Override optim.seed");
  }
}

int cmd_train(const Common& c, std::ostream& out) {
  const ToolConfig cfg = resolve(c);
  const fs::path dir = prepare_dir(output_dir(c, "train", cfg.run.optim.seed));
  RunManifest manifest;
  manifest.command = "train";
  manifest.seed = cfg.run.optim.seed;
  manifest.output_dir = dir.string();
  manifest.config = cfg;
  manifest.save(dir / "manifest.json");

  Model model = build_model(cfg.run.model, cfg.run.optim.seed);
  MetricsLog partial;
  for (const ModalitySpec& s : cfg.run.data.modalities) partial.modalities.push_back(s.name);
  partial.metadata = mom::to_json(cfg.run);
  TrainHooks hooks;
  hooks.on_row = [&](const MetricsRow& row) { partial.append(row); };
  auto write_metrics = [&](const MetricsLog& log) {
    std::ostringstream csv;
    log.write_csv(csv);
    write_text(dir / "metrics.csv", csv.str());
    write_text(dir / "metrics.json", log.to_json().dump(1) + "\n");
  };
  MetricsLog log;
  try {
    log = train(model, cfg.run, hooks);
  } catch (const NumericalAbort& e) {
    write_metrics(partial);
    save_checkpoint(dir / "checkpoint-last-good.bin", model, manifest.to_json().dump());
    const json abort = {{"message", e.what()}, {"step", e.step()}, {"batch_seed", e.batch_seed()},
                        {"batch_step", e.step()}};
    write_text(dir / "abort.json", abort.dump(2) + "\n");
    out << "numerical abort at step " << e.step() << " (data seed " << e.batch_seed() << "): " << e.what() << '\n'
        << "last good checkpoint: " << (dir / "checkpoint-last-good.bin").string() << '\n';
    return exit_code::numerical_abort;
  }
  write_metrics(log);
  save_checkpoint(dir / "checkpoint.bin", model, manifest.to_json().dump());

  out << "run directory: " << dir.string() << '\n';
  if (log.rows.empty()) {
    out << "no steps run\n";
    return exit_code::ok;
  }
  const double frac = cfg.analysis.final_fraction;
  for (std::size_t m = 0; m < log.modalities.size(); ++m) {
    out << "final " << log.modalities[m] << " loss: " << fixed(final_modality_loss(log, m, frac), 4) << '\n';
  }
  out << "final total loss: " << fixed(final_average_loss(log, frac), 4) << '\n';
  return exit_code::ok;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      if (part.empty() || part[0] == '-') throw std::invalid_argument(part);
      seeds.push_back(std::stoull(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::logic_error&) {
      throw ConfigError("--seeds", "malformed seed '" + part + "'");
    }
  }
  if (seeds.empty()) throw ConfigError("--seeds", "at least one seed is required");
  return seeds;
}

int cmd_ablate(const Common& c, const std::string& seeds_text, std::size_t jobs, std::ostream& out) {
  const ToolConfig cfg = resolve(c);
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_text);
  const fs::path dir = prepare_dir(output_dir(c, "ablate", seeds.front()));
  RunManifest manifest;
  manifest.command = "ablate";
  manifest.seed = seeds.front();
  manifest.seeds = seeds;
  manifest.output_dir = dir.string();
  manifest.config = cfg;
  manifest.save(dir / "manifest.json");

  AblationOptions options;
  options.seeds = seeds;
  options.jobs = jobs;
  options.final_fraction = cfg.analysis.final_fraction;
  const AblationReport report = ablation_sweep(cfg.run, options);
  std::ostringstream csv;
  report.write_csv(csv);
  write_text(dir / "ablation.csv", csv.str());
  const std::string table = report.text_table();
  write_text(dir / "ablation.txt", table);
  write_text(dir / "ablation.json", report.to_json().dump(2) + "\n");
  out << table;
  const double band = report.baseline_seed_std_percent();
  if (!std::isnan(band)) out << "baseline seed-to-seed std: " << fixed(band, 2) << "%\n";
  out << "report: " << (dir / "ablation.csv").string() << '\n';
  for (const AblationRow& r : report.rows) {
    if (r.failed) return exit_code::numerical_abort;
  }
  return exit_code::ok;
}

MetricsLog load_run(const std::string& path) {
  fs::path p(path);
  if (fs::is_directory(p)) p /= "metrics.csv";
  std::ifstream in(p);
  if (!in) throw ConfigError("run", "no metrics at " + p.string());
  return MetricsLog::read_csv(in);
}

struct AnalyzeArgs {
  std::vector<std::string> runs;
  std::string mode = "gain";
  std::string modality;
  std::string plot;
  bool by_flops = false;
  std::size_t window = 0;
  double fraction = 0.1;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (a.runs.size() < 2) throw UsageError("analyze needs a baseline run and at least one candidate run");
  std::vector<MetricsLog> logs;
  for (const std::string& r : a.runs) logs.push_back(load_run(r));
  for (std::size_t i = 0; i < logs.size(); ++i) {
    if (logs[i].rows.size() < 2) throw IncompatibleRuns(a.runs[i] + ": needs at least 2 logged steps");
    if (logs[i].modalities != logs[0].modalities) {
      throw IncompatibleRuns(a.runs[i] + ": modalities differ from the baseline run " + a.runs[0]);
    }
  }
  const MetricsLog& base = logs[0];
  if (a.mode == "gain") {
    out << std::left << std::setw(24) << "run" << std::setw(12) << "modality" << std::setw(12) << "baseline"
        << std::setw(12) << "candidate" << "gain (%)\n";
    for (std::size_t i = 1; i < logs.size(); ++i) {
      auto line = [&](const std::string& name, double b, double c) {
        const std::string gain = std::isnan(b) || std::isnan(c) ? "n/a" : fixed(performance_gain(b, c), 2);
        out << std::left << std::setw(24) << fs::path(a.runs[i]).filename().string() << std::setw(12) << name
            << std::setw(12) << fixed(b, 4) << std::setw(12) << fixed(c, 4) << gain << '\n';
      };
      for (std::size_t m = 0; m < base.modalities.size(); ++m) {
        line(base.modalities[m], final_modality_loss(base, m, a.fraction), final_modality_loss(logs[i], m, a.fraction));
      }
      line("total", final_average_loss(base, a.fraction), final_average_loss(logs[i], a.fraction));
    }
    return exit_code::ok;
  }
  if (a.mode != "match") throw UsageError("--mode must be gain or match");

  std::optional<std::size_t> modality;
  if (!a.modality.empty() && a.modality != "total") {
    try {
      modality = base.modality_index(a.modality);
    } catch (const ValidationError& e) {
      throw UsageError(e.what());
    }
  }
  const std::string what = modality ? base.modalities[*modality] : "total";
  const LossCurve bc = LossCurve::from_log(base, modality, a.by_flops, a.window);
  out << "target: final smoothed " << what << " loss of " << a.runs[0] << " (window " << bc.window() << ")\n";
  for (std::size_t i = 1; i < logs.size(); ++i) {
    const LossCurve cc = LossCurve::from_log(logs[i], modality, a.by_flops, bc.window());
    const MatchResult r = loss_match(bc, cc);
    out << a.runs[i] << ": ";
    if (r.matched) {
      out << "matches at " << (a.by_flops ? "FLOPs " : "step ") << fixed(r.candidate_x, 1) << " of "
          << fixed(r.baseline_x, 1) << ", relative " << (a.by_flops ? "FLOPs" : "steps") << " "
          << fixed(r.relative_percent, 2) << "%\n";
    } else {
      out << "no match (target " << fixed(r.target, 4) << ", best " << fixed(r.candidate_best, 4) << ")\n";
    }
    if (!a.plot.empty() && i == 1) {
      PlotLabels labels;
      labels.title = "Training loss (" + what + ")";
      labels.x_axis = a.by_flops ? "cumulative FLOPs" : "step";
      labels.baseline = fs::path(a.runs[0]).filename().string();
      labels.candidate = fs::path(a.runs[i]).filename().string();
      write_text(a.plot, render_match_svg(bc, cc, r, labels));
      out << "plot: " << a.plot << '\n';
    }
  }
  return exit_code::ok;
}

int cmd_gen_data(const Common& c, std::size_t batches, std::ostream& out) {
  const ToolConfig cfg = resolve(c);
  const fs::path dir = prepare_dir(output_dir(c, "gen-data", cfg.run.optim.seed));
  RunManifest manifest;
  manifest.command = "gen-data";
  manifest.seed = cfg.run.optim.seed;
  manifest.output_dir = dir.string();
  manifest.config = cfg;
  manifest.save(dir / "manifest.json");
  const DataGenerator gen(cfg.run.data);
  for (std::size_t step = 1; step <= batches; ++step) {
    std::ostringstream name;
    name << "batch_" << std::setw(6) << std::setfill('0') << step << ".momb";
    std::ofstream file(dir / name.str(), std::ios::binary);
    if (!file) throw ConfigError("output", "cannot write " + (dir / name.str()).string());
    write_batch(file, gen.batch(cfg.run.optim.seed, step));
    out << (dir / name.str()).string() << '\n';
  }
  return exit_code::ok;
}

int cmd_flops(const Common& c, std::ostream& out) {
  const ToolConfig cfg = resolve(c);
  const ModelConfig& mc = cfg.run.model;
  const FlopsBreakdown b = flops_breakdown(mc);
  out << "convention: 2 FLOPs per multiply-add, embedding lookups free, training step = 3x forward\n"
      << "per token, summed over " << mc.layers << " layers:\n"
      << "  in_proj   " << b.in_proj << '\n'
      << "  conv      " << b.conv << '\n'
      << "  x_proj    " << b.x_proj << '\n'
      << "  dt_proj   " << b.dt_proj << '\n'
      << "  scan      " << b.scan << '\n'
      << "  gate      " << b.gate << '\n'
      << "  out_proj  " << b.out_proj << '\n'
      << "  block     " << b.block() << '\n';
  for (std::size_t m = 0; m < b.modality.size(); ++m) {
    out << "token of " << cfg.run.data.modalities[m].name << ": " << b.token(m) << " (head " << b.modality[m] << ")\n";
  }
  out << "uniform-mix per token: " << std::setprecision(12) << flops_per_token(mc) << '\n';
  bool invariant = true;
  for (const SparsityConfig& s : enumerate_sparsity_configs()) {
    ModelConfig other = mc;
    other.sparsity = s;
    invariant = invariant && flops_per_token(other) == flops_per_token(mc);
  }
  out << "identical across all 16 sparsity configurations: " << (invariant ? "yes" : "no") << '\n';
  out << "parameters (" << mc.sparsity.name() << "): " << parameter_count(mc) << '\n';
  return exit_code::ok;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Modality-routed state-space models: train, ablate, analyze"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Common train_args, ablate_args, data_args, flops_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train one model and write metrics, checkpoint and manifest");
  add_common(train_cmd, train_args, true);

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Train all 16 decoupling configurations and report gains");
  add_common(ablate_cmd, ablate_args, true);
  std::string seeds = "1";
  std::size_t jobs = 1;
  ablate_cmd->add_option("--seeds", seeds, "Comma-separated seeds");
  ablate_cmd->add_option("-j,--jobs", jobs, "Concurrent training runs")->check(CLI::PositiveNumber);

  AnalyzeArgs analyze_args;
  CLI::App* analyze_cmd = app.add_subcommand("analyze", "Compare runs: gain or loss matching");
  analyze_cmd->add_option("runs", analyze_args.runs, "Baseline run then candidate runs (directories or CSVs)")
      ->required();
  analyze_cmd->add_option("--mode", analyze_args.mode, "gain or match")->check(CLI::IsMember({"gain", "match"}));
  analyze_cmd->add_option("--modality", analyze_args.modality, "Modality for match mode (default: total loss)");
  analyze_cmd->add_option("--plot", analyze_args.plot, "Write an SVG of the matched curves");
  analyze_cmd->add_flag("--by-flops", analyze_args.by_flops, "Match on cumulative FLOPs instead of steps");
  analyze_cmd->add_option("--window", analyze_args.window, "Smoothing window (0: 2% of points)");
  analyze_cmd->add_option("--fraction", analyze_args.fraction, "Trailing fraction averaged for final losses")
      ->check(CLI::Range(1e-9, 1.0));

  CLI::App* data_cmd = app.add_subcommand("gen-data", "Export synthetic batches as binary records");
  add_common(data_cmd, data_args, true);
  std::size_t batches = 1;
  data_cmd->add_option("--batches", batches, "Number of batches (steps 1..N)");

  CLI::App* flops_cmd = app.add_subcommand("flops", "Print the per-token FLOPs breakdown");
  add_common(flops_cmd, flops_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return exit_code::ok;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return exit_code::ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::config;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*ablate_cmd) return cmd_ablate(ablate_args, seeds, jobs, out);
    if (*analyze_cmd) return cmd_analyze(analyze_args, out);
    if (*data_cmd) return cmd_gen_data(data_args, batches, out);
    if (*flops_cmd) return cmd_flops(flops_args, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return exit_code::config;
  } catch (const NumericalAbort& e) {
    err << "numerical abort: " << e.what() << '\n';
    return exit_code::numerical_abort;
  } catch (const IncompatibleRuns& e) {
    err << "incompatible runs: " << e.what() << '\n';
    return exit_code::incompatible;
  } catch (const ValidationError& e) {
    err << "invalid input: " << e.what() << '\n';
    return exit_code::incompatible;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::failure;
  }
  return exit_code::failure;
}

}  // namespace mom
