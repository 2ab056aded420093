#include "mom/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <fstream>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "mom/errors.hpp"

namespace mom {

namespace pt = boost::property_tree;
using nlohmann::json;

void AnalysisParams::validate() const {
  if (!(final_fraction > 0 && final_fraction <= 1)) {
    throw ConfigError("analysis.final_fraction", "must lie in (0, 1]");
  }
}

SparsityConfig parse_sparsity(const std::string& text) {
  if (text == "none" || text.empty()) return SparsityConfig::dense();
  if (text == "all") return SparsityConfig::all();
  SparsityConfig s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, '+')) {
    if (part == "in_proj") {
      s.in_proj = true;
    } else if (part == "x_proj") {
      s.x_proj = true;
    } else if (part == "dt_proj") {
      s.dt_proj = true;
    } else if (part == "out_proj") {
      s.out_proj = true;
    } else {
      throw ConfigError("model.sparsity", "unknown projection '" + part +
                                              "' (expected none, all, or in_proj/x_proj/dt_proj/out_proj joined by '+')");
    }
  }
  return s;
}

std::string sparsity_to_string(const SparsityConfig& s) { return s.name(); }

namespace {

Discretization parse_discretization(const std::string& s) {
  if (s == "zoh_exp") return Discretization::zoh_exp;
  if (s == "literal") return Discretization::literal;
  throw ConfigError("model.discretization", "expected 'zoh_exp' or 'literal', got '" + s + "'");
}

std::string discretization_name(Discretization d) { return d == Discretization::zoh_exp ? "zoh_exp" : "literal"; }

ScanImpl parse_scan(const std::string& s) {
  if (s == "sequential") return ScanImpl::sequential;
  if (s == "chunked") return ScanImpl::chunked;
  throw ConfigError("train.scan", "expected 'sequential' or 'chunked', got '" + s + "'");
}

std::string scan_name(ScanImpl s) { return s == ScanImpl::sequential ? "sequential" : "chunked"; }

ModalityKind parse_kind(const std::string& s) {
  if (s == "discrete") return ModalityKind::discrete;
  if (s == "continuous") return ModalityKind::continuous;
  throw ConfigError("data.modalities.kind", "expected 'discrete' or 'continuous', got '" + s + "'");
}

// Typed access to one INI section that remembers which keys were read.
class Section {
 public:
  Section(const pt::ptree& tree, std::string name) : name_(std::move(name)) {
    if (auto child = tree.get_child_optional(name_)) node_ = &*child;
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_ && node_->get_child_optional(pt::ptree::path_type(key, '\0'));
  }

  std::string text(const std::string& key) {
    return node_->get<std::string>(pt::ptree::path_type(key, '\0'));
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    if (!has(key)) return;
    const std::string raw = text(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") {
          out = true;
        } else if (raw == "false" || raw == "0" || raw == "no" || raw == "off") {
          out = false;
        } else {
          throw std::invalid_argument(raw);
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        out = raw;
      } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t used = 0;
        out = std::stod(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
      } else {
        std::size_t used = 0;
        if (!raw.empty() && raw[0] == '-') throw std::invalid_argument(raw);
        out = static_cast<T>(std::stoull(raw, &used));
        if (used != raw.size()) throw std::invalid_argument(raw);
      }
    } catch (const std::logic_error&) {
      throw ConfigError(name_ + "." + key, "malformed value '" + raw + "'");
    }
  }

  void reject_unknown() const {
    if (!node_) return;
    for (const auto& [key, child] : *node_) {
      if (!seen_.count(key)) throw ConfigError(name_ + "." + key, "unknown key");
    }
  }

 private:
  std::string name_;
  const pt::ptree* node_ = nullptr;
  std::set<std::string> seen_;
};

}  // namespace

ToolConfig tool_config_from_tree(const pt::ptree& tree) {
  static const std::set<std::string> sections = {"model", "data", "optim", "train", "analysis"};
  for (const auto& [name, child] : tree) {
    if (!sections.count(name)) throw ConfigError(name, "unknown section");
  }
  ToolConfig out;
  RunConfig& run = out.run;

  Section data(tree, "data");
  std::string setting = "three_modality";
  std::size_t patch_dim = 8;
  // `vocab` sets every discrete stream; the per-stream keys override it.
  std::array<std::size_t, 3> vocabs = {256, 1024, 500};
  data.read("setting", setting);
  if (data.has("vocab")) {
    std::size_t v = 0;
    data.read("vocab", v);
    vocabs.fill(v);
  }
  data.read("text_vocab", vocabs[0]);
  data.read("image_vocab", vocabs[1]);
  const bool speech_set = data.has("speech_vocab");
  data.read("speech_vocab", vocabs[2]);
  data.read("patch_dim", patch_dim);
  if (setting == "two_modality") {
    run.data = DataConfig::two_modality(vocabs[0], vocabs[1]);
  } else if (setting == "three_modality") {
    run.data = DataConfig::three_modality(vocabs[0], vocabs[1], vocabs[2]);
  } else if (setting == "text_and_patches") {
    run.data = DataConfig::text_and_patches(vocabs[0], patch_dim);
  } else {
    throw ConfigError("data.setting", "expected two_modality, three_modality or text_and_patches, got '" + setting + "'");
  }
  data.read("batch", run.data.batch);
  data.read("seq_len", run.data.seq_len);
  data.read("heterogeneity", run.data.heterogeneity);
  data.reject_unknown();
  if (speech_set && setting != "three_modality") {
    throw ConfigError("data.speech_vocab", "only the three_modality setting has a speech stream");
  }

  Section model(tree, "model");
  ModelConfig mc;
  if (model.has("preset")) mc = preset(model.text("preset"), {}, 0);
  model.read("f", mc.f);
  model.read("layers", mc.layers);
  model.read("d", mc.d);
  model.read("n", mc.n);
  model.read("r", mc.r);
  model.read("k", mc.k);
  if (model.has("sparsity")) mc.sparsity = parse_sparsity(model.text("sparsity"));
  if (model.has("discretization")) mc.discretization = parse_discretization(model.text("discretization"));
  model.read("shared_norm", mc.shared_norm);
  model.read("zero_init_heads", mc.zero_init_heads);
  model.reject_unknown();

  Section optim(tree, "optim");
  OptimConfig oc;
  optim.read("lr", oc.lr);
  optim.read("beta1", oc.beta1);
  optim.read("beta2", oc.beta2);
  optim.read("eps", oc.eps);
  optim.read("weight_decay", oc.weight_decay);
  if (optim.has("warmup_steps")) {
    std::size_t w = 0;
    optim.read("warmup_steps", w);
    oc.warmup_steps = w;
  }
  optim.read("steps", oc.total_steps);
  optim.read("grad_clip_norm", oc.grad_clip_norm);
  optim.read("min_lr_ratio", oc.min_lr_ratio);
  optim.read("seed", oc.seed);
  optim.reject_unknown();

  Section train(tree, "train");
  Objective objective = run.data.continuous_dim() > 0 ? Objective::transfusion : Objective::uniform;
  if (train.has("objective")) objective = parse_objective(train.text("objective"));
  run = RunConfig::matched(mc, run.data, oc, objective);
  train.read("diffusion_lambda", run.diffusion_lambda);
  train.read("diffusion_steps", run.diffusion_steps);
  train.read("schedule_clip", run.schedule_clip);
  train.read("wall_time", run.wall_time);
  train.read("fused", run.exec.fused);
  if (train.has("scan")) run.exec.scan.impl = parse_scan(train.text("scan"));
  train.read("chunk", run.exec.scan.chunk);
  train.reject_unknown();

  Section analysis(tree, "analysis");
  analysis.read("window", out.analysis.window);
  analysis.read("final_fraction", out.analysis.final_fraction);
  analysis.reject_unknown();

  run.validate();
  out.analysis.validate();
  return out;
}

pt::ptree parse_ini(const std::string& text) {
  std::istringstream in(text);
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", std::string("cannot parse: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  return tree;
}

pt::ptree read_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_ini(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError("config", path.string() + ": " + e.what());
  }
}

void apply_override(pt::ptree& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set", "expected section.key=value, got '" + assignment + "'");
  }
  const std::string path = assignment.substr(0, eq);
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == path.size()) {
    throw ConfigError("--set", "key must be section.key, got '" + path + "'");
  }
  const std::string section = path.substr(0, dot), key = path.substr(dot + 1);
  tree.put_child(pt::ptree::path_type(section, '\0'), tree.get_child(pt::ptree::path_type(section, '\0'), pt::ptree{}));
  tree.get_child(pt::ptree::path_type(section, '\0')).put(pt::ptree::path_type(key, '\0'), assignment.substr(eq + 1));
}

ToolConfig load_tool_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  pt::ptree tree = read_ini(path);
  for (const std::string& o : overrides) apply_override(tree, o);
  return tool_config_from_tree(tree);
}

json to_json(const ModelConfig& c) {
  return {{"f", c.f},
          {"layers", c.layers},
          {"d", c.d},
          {"n", c.n},
          {"r", c.r},
          {"k", c.k},
          {"vocab_sizes", c.vocab_sizes},
          {"continuous_dim", c.continuous_dim},
          {"sparsity", sparsity_to_string(c.sparsity)},
          {"discretization", discretization_name(c.discretization)},
          {"shared_norm", c.shared_norm},
          {"zero_init_heads", c.zero_init_heads},
          {"preset_name", c.preset_name}};
}

json to_json(const DataConfig& c) {
  json mods = json::array();
  for (const ModalitySpec& s : c.modalities) {
    mods.push_back({{"name", s.name},
                    {"kind", s.kind == ModalityKind::discrete ? "discrete" : "continuous"},
                    {"size", s.size},
                    {"min_segment", s.min_segment},
                    {"max_segment", s.max_segment},
                    {"p_repeat", s.gen.p_repeat},
                    {"p_copy", s.gen.p_copy},
                    {"lag", s.gen.lag},
                    {"temperature", s.gen.temperature},
                    {"table_seed", s.gen.table_seed},
                    {"smoothing", s.gen.smoothing}});
  }
  return {{"modalities", mods}, {"batch", c.batch}, {"seq_len", c.seq_len}, {"heterogeneity", c.heterogeneity}};
}

json to_json(const OptimConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"eps", c.eps},
          {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps ? json(*c.warmup_steps) : json(nullptr)},
          {"total_steps", c.total_steps},
          {"grad_clip_norm", c.grad_clip_norm},
          {"min_lr_ratio", c.min_lr_ratio},
          {"seed", c.seed}};
}

json to_json(const RunConfig& c) {
  return {{"model", to_json(c.model)},
          {"data", to_json(c.data)},
          {"optim", to_json(c.optim)},
          {"objective", to_string(c.objective)},
          {"diffusion_lambda", c.diffusion_lambda},
          {"diffusion_steps", c.diffusion_steps},
          {"schedule_clip", c.schedule_clip},
          {"fused", c.exec.fused},
          {"scan", scan_name(c.exec.scan.impl)},
          {"chunk", c.exec.scan.chunk},
          {"wall_time", c.wall_time}};
}

json to_json(const ToolConfig& c) {
  return {{"run", to_json(c.run)},
          {"analysis", {{"window", c.analysis.window}, {"final_fraction", c.analysis.final_fraction}}}};
}

namespace {

template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key, e.what());
  }
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.f = field<std::size_t>(j, "f", "model");
  c.layers = field<std::size_t>(j, "layers", "model");
  c.d = field<std::size_t>(j, "d", "model");
  c.n = field<std::size_t>(j, "n", "model");
  c.r = field<std::size_t>(j, "r", "model");
  c.k = field<std::size_t>(j, "k", "model");
  c.vocab_sizes = field<std::vector<std::size_t>>(j, "vocab_sizes", "model");
  c.continuous_dim = field<std::size_t>(j, "continuous_dim", "model");
  c.sparsity = parse_sparsity(field<std::string>(j, "sparsity", "model"));
  c.discretization = parse_discretization(field<std::string>(j, "discretization", "model"));
  c.shared_norm = field<bool>(j, "shared_norm", "model");
  c.zero_init_heads = field<bool>(j, "zero_init_heads", "model");
  c.preset_name = field<std::string>(j, "preset_name", "model");
  return c;
}

DataConfig data_config_from_json(const json& j) {
  DataConfig c;
  c.batch = field<std::size_t>(j, "batch", "data");
  c.seq_len = field<std::size_t>(j, "seq_len", "data");
  c.heterogeneity = field<double>(j, "heterogeneity", "data");
  for (const json& m : field<json>(j, "modalities", "data")) {
    ModalitySpec s;
    s.name = field<std::string>(m, "name", "data.modalities");
    s.kind = parse_kind(field<std::string>(m, "kind", "data.modalities"));
    s.size = field<std::size_t>(m, "size", "data.modalities");
    s.min_segment = field<std::size_t>(m, "min_segment", "data.modalities");
    s.max_segment = field<std::size_t>(m, "max_segment", "data.modalities");
    s.gen.p_repeat = field<double>(m, "p_repeat", "data.modalities");
    s.gen.p_copy = field<double>(m, "p_copy", "data.modalities");
    s.gen.lag = field<std::size_t>(m, "lag", "data.modalities");
    s.gen.temperature = field<double>(m, "temperature", "data.modalities");
    s.gen.table_seed = field<std::uint64_t>(m, "table_seed", "data.modalities");
    s.gen.smoothing = field<double>(m, "smoothing", "data.modalities");
    c.modalities.push_back(std::move(s));
  }
  return c;
}

OptimConfig optim_config_from_json(const json& j) {
  OptimConfig c;
  c.lr = field<double>(j, "lr", "optim");
  c.beta1 = field<double>(j, "beta1", "optim");
  c.beta2 = field<double>(j, "beta2", "optim");
  c.eps = field<double>(j, "eps", "optim");
  c.weight_decay = field<double>(j, "weight_decay", "optim");
  const json w = field<json>(j, "warmup_steps", "optim");
  if (!w.is_null()) c.warmup_steps = field<std::size_t>(j, "warmup_steps", "optim");
  c.total_steps = field<std::size_t>(j, "total_steps", "optim");
  c.grad_clip_norm = field<double>(j, "grad_clip_norm", "optim");
  c.min_lr_ratio = field<double>(j, "min_lr_ratio", "optim");
  c.seed = field<std::uint64_t>(j, "seed", "optim");
  return c;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  c.model = model_config_from_json(field<json>(j, "model", "run"));
  c.data = data_config_from_json(field<json>(j, "data", "run"));
  c.optim = optim_config_from_json(field<json>(j, "optim", "run"));
  c.objective = parse_objective(field<std::string>(j, "objective", "run"));
  c.diffusion_lambda = field<double>(j, "diffusion_lambda", "run");
  c.diffusion_steps = field<std::size_t>(j, "diffusion_steps", "run");
  c.schedule_clip = field<double>(j, "schedule_clip", "run");
  c.exec.fused = field<bool>(j, "fused", "run");
  c.exec.scan.impl = parse_scan(field<std::string>(j, "scan", "run"));
  c.exec.scan.chunk = field<std::size_t>(j, "chunk", "run");
  c.wall_time = field<bool>(j, "wall_time", "run");
  return c;
}

ToolConfig tool_config_from_json(const json& j) {
  ToolConfig c;
  c.run = run_config_from_json(field<json>(j, "run", "config"));
  const json a = field<json>(j, "analysis", "config");
  c.analysis.window = field<std::size_t>(a, "window", "analysis");
  c.analysis.final_fraction = field<double>(a, "final_fraction", "analysis");
  return c;
}

}  // namespace mom
