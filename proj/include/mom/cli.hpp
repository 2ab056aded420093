#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mom/config.hpp"

namespace mom {

inline constexpr const char* kToolVersion = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config = 2;
inline constexpr int numerical_abort = 3;
inline constexpr int incompatible = 4;
}  // namespace exit_code

// Written as manifest.json into every run directory; together with the seed it
// determines every other file in that directory.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command;
  std::uint64_t seed = 0;
  // Ablation seeds; empty for single runs.
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  ToolConfig config;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

// Commands: train, ablate, analyze, gen-data, flops. Returns the process exit
// status (see exit_code). Output directories default to
// $MOM_OUTPUT_ROOT/<command>-<config stem>-seed<seed>, with "runs" when the
// variable is unset.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mom
