#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "mom/model.hpp"

namespace mom {

// "MOMCKPT1", u64 metadata length, metadata bytes (JSON text), u64 entry
// count, then per entry: u32 key length, key, u32 rank, u64 dims, f64 data.
// Keys and order follow Model::visit. All integers little-endian.
void write_checkpoint(std::ostream& out, const Model& model, const std::string& metadata = "{}");
// Fills `model` (already built with the matching config) by key. Throws
// ValidationError on bad magic, missing or unknown keys, or shape mismatch.
// Returns the metadata string.
std::string read_checkpoint(std::istream& in, Model& model);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& metadata = "{}");
std::string load_checkpoint(const std::filesystem::path& path, Model& model);

}  // namespace mom
