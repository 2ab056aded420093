#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "mom/trainer.hpp"

namespace mom {

struct AnalysisParams {
  // Smoothing window for loss matching; 0 selects 2% of the points.
  std::size_t window = 0;
  // Trailing fraction of steps averaged into a run's final loss.
  double final_fraction = 0.1;

  void validate() const;
};

struct ToolConfig {
  RunConfig run;
  AnalysisParams analysis;
};

// INI sections and keys (all optional; defaults shown in docs/FORMATS.md):
//   [model]    preset f layers d n r k sparsity discretization shared_norm zero_init_heads
//   [data]     setting vocab patch_dim batch seq_len heterogeneity
//   [optim]    lr beta1 beta2 eps weight_decay warmup_steps steps grad_clip_norm min_lr_ratio seed
//   [train]    objective diffusion_lambda diffusion_steps schedule_clip wall_time fused scan chunk
//   [analysis] window final_fraction
// Unknown sections or keys and malformed values throw ConfigError naming
// "section.key".
ToolConfig tool_config_from_tree(const boost::property_tree::ptree& tree);
boost::property_tree::ptree read_ini(const std::filesystem::path& path);
boost::property_tree::ptree parse_ini(const std::string& text);
// "section.key=value"; throws ConfigError on a missing '='.
void apply_override(boost::property_tree::ptree& tree, const std::string& assignment);
ToolConfig load_tool_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

SparsityConfig parse_sparsity(const std::string& text);
std::string sparsity_to_string(const SparsityConfig& s);

// Lossless JSON forms; from_json throws ConfigError on missing or bad fields.
nlohmann::json to_json(const ModelConfig& cfg);
nlohmann::json to_json(const DataConfig& cfg);
nlohmann::json to_json(const OptimConfig& cfg);
nlohmann::json to_json(const RunConfig& cfg);
nlohmann::json to_json(const ToolConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
DataConfig data_config_from_json(const nlohmann::json& j);
OptimConfig optim_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);
ToolConfig tool_config_from_json(const nlohmann::json& j);

}  // namespace mom
