#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "mom/routing.hpp"
#include "mom/tensor.hpp"

namespace mom {

enum class ModalityKind { discrete, continuous };

// Per-token rule for a discrete stream, applied in order: repeat the previous
// token with p_repeat, copy the token `lag` positions back with p_copy, else
// step a Markov chain whose transition logits are N(0,1)/temperature drawn
// from table_seed. Continuous streams are AR(1) in position with coefficient
// `smoothing`.
struct GeneratorParams {
  double p_repeat = 0.0;
  double p_copy = 0.0;
  std::size_t lag = 1;
  double temperature = 1.0;
  std::uint64_t table_seed = 0;
  double smoothing = 0.9;
};

struct ModalitySpec {
  std::string name;
  ModalityKind kind = ModalityKind::discrete;
  // Vocabulary size (discrete) or patch dimension (continuous).
  std::size_t size = 0;
  GeneratorParams gen;
  std::size_t min_segment = 1;
  std::size_t max_segment = 1;
};

// Discrete modalities come first; at most one continuous modality, last. The
// modality id of a spec is its index, matching ModelConfig.
struct DataConfig {
  std::vector<ModalitySpec> modalities;
  std::size_t batch = 8;
  std::size_t seq_len = 256;
  // 1 keeps every modality's own generator; 0 draws every discrete token from
  // modality 0's generator (vocabularies must then agree). Values between mix
  // per token.
  double heterogeneity = 1.0;

  void validate() const;
  std::size_t num_discrete() const;
  std::size_t continuous_dim() const;
  std::vector<std::size_t> vocab_sizes() const;

  // Text and discrete image tokens.
  static DataConfig two_modality(std::size_t text_vocab = 256, std::size_t image_vocab = 1024);
  // Text, discrete image, speech.
  static DataConfig three_modality(std::size_t text_vocab = 256, std::size_t image_vocab = 1024,
                                   std::size_t speech_vocab = 500);
  // Text with continuous image patches of dimension patch_dim.
  static DataConfig text_and_patches(std::size_t vocab = 256, std::size_t patch_dim = 8);
};

struct Batch {
  ModalityMask mask;
  std::vector<int> tokens;   // [b*l]; 0 at continuous positions
  std::vector<int> targets;  // next-token targets, -1 where none
  Tensor patches;            // [continuous positions, patch_dim], clean x0
};

// Holds the Markov tables of a config; gen_batch on one instance is a pure
// function of (seed, step).
class DataGenerator {
 public:
  explicit DataGenerator(DataConfig cfg);
  const DataConfig& config() const noexcept { return cfg_; }
  Batch batch(std::uint64_t seed, std::uint64_t step) const;

 private:
  int draw(std::size_t table, int prev, std::mt19937_64& rng) const;

  DataConfig cfg_;
  // Per discrete modality: cumulative transition rows [V*V] and a start distribution [V].
  std::vector<std::vector<double>> cumulative_;
  std::vector<std::vector<double>> start_;
};

Batch gen_batch(const DataConfig& cfg, std::uint64_t seed, std::uint64_t step);

// Little-endian record: "MOMB", u32 version, u64 batch, length, modalities,
// continuous rows, patch dim, i32 ids[b*l], i32 tokens[b*l], f64 patches.
void write_batch(std::ostream& out, const Batch& batch);
Batch read_batch(std::istream& in);

}  // namespace mom
