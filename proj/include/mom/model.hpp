#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mom/autodiff.hpp"
#include "mom/block.hpp"
#include "mom/routing.hpp"
#include "mom/tensor.hpp"

namespace mom {

// Modality ids: discrete modalities are 0..D-1 in vocab_sizes order; when
// continuous_dim > 0 the continuous (patch) modality is id D.
struct ModelConfig {
  std::size_t f = 64;
  std::size_t layers = 2;
  // 0 selects the default derived from f (d = 2f, r = ceil(f/16)).
  std::size_t d = 0;
  std::size_t n = 16;
  std::size_t r = 0;
  std::size_t k = 4;
  std::vector<std::size_t> vocab_sizes;
  std::size_t continuous_dim = 0;
  SparsityConfig sparsity;
  Discretization discretization = Discretization::zoh_exp;
  // One norm gain per layer shared by every modality, or one per modality.
  bool shared_norm = true;
  // Heads start at zero so every modality's step-0 loss is ln V.
  bool zero_init_heads = true;
  std::string preset_name;

  BlockDims block_dims() const;
  std::size_t num_discrete() const noexcept { return vocab_sizes.size(); }
  bool has_continuous() const noexcept { return continuous_dim > 0; }
  std::size_t num_modalities() const noexcept { return vocab_sizes.size() + (has_continuous() ? 1 : 0); }
  int continuous_id() const noexcept { return static_cast<int>(vocab_sizes.size()); }
  void validate() const;
};

// Shape presets named after the published scales. Desk presets keep the
// width/depth ratios at f/8 and ceil(layers/4); "full-" presets carry the
// published widths and are never instantiated by tests.
struct PresetShape {
  std::string name;
  std::size_t f;
  std::size_t layers;
  std::size_t seq_len;
  std::size_t tokens_per_batch;
  std::size_t steps;
};
const std::vector<PresetShape>& preset_shapes();
// Throws ConfigError("model.preset") for unknown names.
ModelConfig preset(const std::string& name, std::vector<std::size_t> vocab_sizes, std::size_t continuous_dim = 0);

struct Model {
  ModelConfig cfg;
  std::vector<Tensor> embeddings;          // [V_m, f]
  Tensor patch_in;                         // [continuous_dim, f]
  std::vector<MoMBlockParams> blocks;      // one per layer
  std::vector<std::vector<Tensor>> norms;  // per layer, 1 or M gains [f]
  std::vector<Tensor> final_norm;          // 1 or M gains [f]
  std::vector<Tensor> heads;               // [f, V_m]
  Tensor noise_head;                       // [f, continuous_dim]

  std::size_t parameter_count() const;
  // Every parameter tensor with its checkpoint key, in a fixed order.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;
};

Model build_model(const ModelConfig& cfg, std::uint64_t seed);
std::size_t parameter_count(const ModelConfig& cfg);

// Trainable bindings in Model::visit order.
struct ModelVars {
  std::vector<Var> embeddings;
  std::optional<Var> patch_in;
  std::vector<BlockVars> blocks;
  std::vector<std::vector<Var>> norms;
  std::vector<Var> final_norm;
  std::vector<Var> heads;
  std::optional<Var> noise_head;
  std::vector<Var> all;
};
ModelVars bind_model(Tape& tape, const Model& model, bool requires_grad);
// Structured view over `all`, which must follow model.visit order.
ModelVars assemble_model_vars(const Model& model, std::vector<Var> all);

struct ModelInput {
  ModalityMask mask;
  // [b*l] ids; read only at discrete positions.
  std::vector<int> tokens;
  // [continuous positions, continuous_dim] in flat position order (noised when
  // training the diffusion path).
  Tensor patches;
  // Diffusion timestep per continuous position.
  std::vector<int> timesteps;
};

struct ExecOptions {
  bool fused = true;
  ScanOptions scan;
};

struct ModelOutput {
  // Per discrete modality: [count_m, V_m], rows in mask.partition()[m] order.
  std::vector<Var> logits;
  // [continuous positions, continuous_dim]; invalid without a continuous modality.
  Var noise_pred;
};

// Sinusoidal embedding of a diffusion timestep: sin over the first half of the
// features, cos over the second; odd widths leave the last feature 0.
std::vector<double> timestep_embedding(int t, std::size_t f);

ModelOutput forward(Tape& tape, const ModelVars& vars, const ModelConfig& cfg, const ModelInput& input,
                    const ExecOptions& exec = {});

// Constant-tape conveniences.
std::vector<Tensor> forward_lm(const Model& model, const ModelInput& input, const ExecOptions& exec = {});
// Throws UsageError when the model has no continuous modality.
Tensor forward_diffusion_path(const Model& model, const ModelInput& input, const ExecOptions& exec = {});

// [b, l, V_m] view of one modality's logits; positions of other modalities are 0.
Tensor logits_grid(const Tensor& modality_logits, const ModalityMask& mask, int modality);

}  // namespace mom
