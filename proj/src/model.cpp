#include "mom/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include "mom/errors.hpp"
#include "mom/ops.hpp"

namespace mom {

BlockDims ModelConfig::block_dims() const {
  BlockDims dims = BlockDims::defaults(f);
  if (d != 0) dims.d = d;
  if (r != 0) dims.r = r;
  dims.n = n;
  dims.k = k;
  return dims;
}

void ModelConfig::validate() const {
  if (f == 0) throw ConfigError("model.f", "must be positive");
  if (layers == 0) throw ConfigError("model.layers", "must be at least 1");
  if (num_modalities() == 0) throw ConfigError("model.vocab_sizes", "at least one modality must be declared");
  for (std::size_t m = 0; m < vocab_sizes.size(); ++m) {
    if (vocab_sizes[m] == 0) {
      throw ConfigError("model.vocab_sizes", "modality " + std::to_string(m) + " has an empty vocabulary");
    }
  }
  block_dims().validate();
}

const std::vector<PresetShape>& preset_shapes() {
  static const std::vector<PresetShape> shapes = {
      // Desk scale: f/8, ceil(layers/4), short sequences.
      {"37M", 32, 1, 256, 2048, 2000},
      {"94M", 64, 2, 256, 2048, 2000},
      {"443M", 128, 6, 256, 2048, 2000},
      {"880M", 192, 6, 256, 2048, 2000},
      {"1.5B", 256, 6, 256, 2048, 2000},
      {"163M", 96, 4, 256, 2048, 2000},
      {"760M", 192, 6, 256, 2048, 2000},
      {"1.4B", 256, 6, 256, 2048, 2000},
      // Published configurations, documentation only.
      {"full-37M", 256, 4, 4096, 524288, 160000},
      {"full-94M", 512, 8, 4096, 524288, 160000},
      {"full-443M", 1024, 24, 4096, 524288, 160000},
      {"full-880M", 1536, 24, 4096, 524288, 120000},
      {"full-1.5B", 2048, 24, 4096, 524288, 120000},
      {"full-163M", 768, 16, 4096, 1048576, 250000},
      {"full-760M", 1536, 24, 4096, 1048576, 250000},
      {"full-1.4B", 2048, 24, 4096, 1048576, 250000},
  };
  return shapes;
}

ModelConfig preset(const std::string& name, std::vector<std::size_t> vocab_sizes, std::size_t continuous_dim) {
  for (const PresetShape& p : preset_shapes()) {
    if (p.name != name) continue;
    ModelConfig cfg;
    cfg.f = p.f;
    cfg.layers = p.layers;
    cfg.vocab_sizes = std::move(vocab_sizes);
    cfg.continuous_dim = continuous_dim;
    cfg.preset_name = name;
    return cfg;
  }
  throw ConfigError("model.preset", "unknown preset '" + name + "'");
}

namespace {

std::size_t norm_copies(const ModelConfig& cfg) { return cfg.shared_norm ? 1 : cfg.num_modalities(); }

// Single traversal shared by visit() and bind_model() so keys and order never drift.
template <typename M, typename F>
void visit_impl(M& model, F&& fn) {
  const ModelConfig& cfg = model.cfg;
  for (std::size_t m = 0; m < model.embeddings.size(); ++m) fn("embed." + std::to_string(m), model.embeddings[m]);
  if (cfg.has_continuous()) fn(std::string("patch_in"), model.patch_in);
  auto routed = [&](const std::string& prefix, auto& rw, const char* bias_name) {
    const bool one = rw.weights.size() == 1;
    for (std::size_t m = 0; m < rw.weights.size(); ++m) {
      fn(prefix + "." + (one ? std::string("shared") : std::to_string(m)), rw.weights[m]);
    }
    for (std::size_t m = 0; m < rw.biases.size(); ++m) {
      fn(prefix.substr(0, prefix.rfind('.')) + "." + bias_name + "." + (one ? std::string("shared") : std::to_string(m)),
         rw.biases[m]);
    }
  };
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const std::string layer = "layer." + std::to_string(i);
    auto& b = model.blocks[i];
    for (std::size_t g = 0; g < model.norms[i].size(); ++g) {
      fn(layer + ".norm" + (model.norms[i].size() == 1 ? std::string() : "." + std::to_string(g)), model.norms[i][g]);
    }
    routed(layer + ".in_proj", b.in_proj, "in_proj_bias");
    fn(layer + ".conv", b.conv_kernel);
    routed(layer + ".x_proj", b.x_proj, "x_proj_bias");
    routed(layer + ".dt_proj", b.dt_proj, "dt_proj_bias");
    fn(layer + ".A_log", b.a_log);
    routed(layer + ".out_proj", b.out_proj, "out_proj_bias");
  }
  for (std::size_t g = 0; g < model.final_norm.size(); ++g) {
    fn("final_norm" + (model.final_norm.size() == 1 ? std::string() : "." + std::to_string(g)), model.final_norm[g]);
  }
  for (std::size_t m = 0; m < model.heads.size(); ++m) fn("head." + std::to_string(m), model.heads[m]);
  if (cfg.has_continuous()) fn(std::string("noise_head"), model.noise_head);
}

}  // namespace

void Model::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_impl(*this, [&](const std::string& key, Tensor& t) { fn(key, t); });
}

void Model::visit(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  visit_impl(*this, [&](const std::string& key, const Tensor& t) { fn(key, t); });
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  visit([&](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

std::size_t parameter_count(const ModelConfig& cfg) {
  cfg.validate();
  const BlockDims dims = cfg.block_dims();
  const std::size_t M = cfg.num_modalities();
  auto copies = [&](bool decoupled) { return decoupled ? M : 1; };
  std::size_t per_layer = copies(cfg.sparsity.in_proj) * dims.f * 2 * dims.d +
                          copies(cfg.sparsity.x_proj) * dims.d * dims.x_proj_out() +
                          copies(cfg.sparsity.dt_proj) * (dims.r * dims.d + dims.d) +
                          copies(cfg.sparsity.out_proj) * dims.d * dims.f + dims.d * dims.k + dims.d * dims.n +
                          norm_copies(cfg) * dims.f;
  std::size_t total = cfg.layers * per_layer + norm_copies(cfg) * dims.f;
  for (std::size_t v : cfg.vocab_sizes) total += 2 * v * dims.f;
  total += 2 * cfg.continuous_dim * dims.f;
  return total;
}

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const BlockDims dims = cfg.block_dims();
  const std::size_t M = cfg.num_modalities();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  auto normal_tensor = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_data()) v = normal(rng);
    return t;
  };

  Model model;
  model.cfg = cfg;
  for (std::size_t v : cfg.vocab_sizes) model.embeddings.push_back(normal_tensor({v, cfg.f}));
  if (cfg.has_continuous()) model.patch_in = normal_tensor({cfg.continuous_dim, cfg.f});
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    model.norms.emplace_back(norm_copies(cfg), Tensor(Shape{cfg.f}, 1.0));
    model.blocks.push_back(init_block_params(dims, cfg.sparsity, M, rng));
  }
  model.final_norm.assign(norm_copies(cfg), Tensor(Shape{cfg.f}, 1.0));
  for (std::size_t v : cfg.vocab_sizes) {
    model.heads.push_back(cfg.zero_init_heads ? Tensor(Shape{cfg.f, v}) : normal_tensor({cfg.f, v}));
  }
  if (cfg.has_continuous()) {
    model.noise_head = cfg.zero_init_heads ? Tensor(Shape{cfg.f, cfg.continuous_dim})
                                           : normal_tensor({cfg.f, cfg.continuous_dim});
  }
  return model;
}

ModelVars bind_model(Tape& tape, const Model& model, bool requires_grad) {
  std::vector<Var> all;
  model.visit([&](const std::string&, const Tensor& t) { all.push_back(tape.leaf(t, requires_grad)); });
  return assemble_model_vars(model, std::move(all));
}

ModelVars assemble_model_vars(const Model& model, std::vector<Var> all) {
  std::size_t expected = 0;
  model.visit([&](const std::string&, const Tensor&) { ++expected; });
  if (all.size() != expected) {
    throw DimensionError("assemble_model_vars: " + std::to_string(all.size()) + " vars for " +
                         std::to_string(expected) + " parameters");
  }
  ModelVars vars;
  vars.all = std::move(all);
  std::size_t next = 0;
  auto take = [&] { return vars.all[next++]; };
  auto take_routed = [&](const RoutedWeights& rw) {
    RoutedVars rv;
    for (std::size_t i = 0; i < rw.weights.size(); ++i) rv.weights.push_back(take());
    return rv;
  };
  const ModelConfig& cfg = model.cfg;
  for (std::size_t m = 0; m < model.embeddings.size(); ++m) vars.embeddings.push_back(take());
  if (cfg.has_continuous()) vars.patch_in = take();
  // Mirrors visit_impl: norm, in_proj, conv, x_proj, dt_proj (+bias), A_log, out_proj.
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const MoMBlockParams& b = model.blocks[i];
    std::vector<Var> norms;
    for (std::size_t g = 0; g < model.norms[i].size(); ++g) norms.push_back(take());
    vars.norms.push_back(std::move(norms));
    BlockVars bv;
    bv.in_proj = take_routed(b.in_proj);
    bv.conv_kernel = take();
    bv.x_proj = take_routed(b.x_proj);
    bv.dt_proj = take_routed(b.dt_proj);
    for (std::size_t m = 0; m < b.dt_proj.biases.size(); ++m) bv.dt_proj.biases.push_back(take());
    bv.a_log = take();
    bv.out_proj = take_routed(b.out_proj);
    vars.blocks.push_back(std::move(bv));
  }
  for (std::size_t g = 0; g < model.final_norm.size(); ++g) vars.final_norm.push_back(take());
  for (std::size_t m = 0; m < model.heads.size(); ++m) vars.heads.push_back(take());
  if (cfg.has_continuous()) vars.noise_head = take();
  return vars;
}

std::vector<double> timestep_embedding(int t, std::size_t f) {
  std::vector<double> out(f, 0.0);
  const std::size_t half = f / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(static_cast<double>(t) * freq);
    out[half + i] = std::cos(static_cast<double>(t) * freq);
  }
  return out;
}

ModelOutput forward(Tape& tape, const ModelVars& vars, const ModelConfig& cfg, const ModelInput& input,
                    const ExecOptions& exec) {
  const ModalityMask& mask = input.mask;
  const std::size_t N = mask.tokens(), f = cfg.f;
  if (mask.num_modalities() != cfg.num_modalities()) {
    throw DimensionError("forward: mask declares " + std::to_string(mask.num_modalities()) + " modalities, model has " +
                         std::to_string(cfg.num_modalities()));
  }
  if (input.tokens.size() != N) {
    throw DimensionError("forward: " + std::to_string(input.tokens.size()) + " token ids for " + std::to_string(N) +
                         " positions");
  }
  const auto& parts = mask.partition();

  // Embed: every position's row comes from exactly one source.
  std::vector<Var> pieces;
  for (std::size_t m = 0; m < cfg.num_discrete(); ++m) {
    if (parts[m].empty()) continue;
    std::vector<int> ids;
    ids.reserve(parts[m].size());
    for (std::size_t pos : parts[m]) {
      const int id = input.tokens[pos];
      if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_sizes[m]) {
        throw ValidationError("forward: token " + std::to_string(id) + " at batch " +
                              std::to_string(pos / mask.length()) + ", position " + std::to_string(pos % mask.length()) +
                              " outside modality " + std::to_string(m) + " vocabulary of " +
                              std::to_string(cfg.vocab_sizes[m]));
      }
      ids.push_back(id);
    }
    pieces.push_back(ops::scatter_rows(ops::embedding(vars.embeddings[m], ids), parts[m], N));
  }
  std::span<const std::size_t> cont_rows;
  if (cfg.has_continuous()) cont_rows = parts[static_cast<std::size_t>(cfg.continuous_id())];
  if (!cont_rows.empty()) {
    if (input.patches.shape() != Shape{cont_rows.size(), cfg.continuous_dim}) {
      throw DimensionError("forward: patches " + shape_string(input.patches.shape()) + ", expected [" +
                           std::to_string(cont_rows.size()) + "," + std::to_string(cfg.continuous_dim) + "]");
    }
    if (input.timesteps.size() != cont_rows.size()) {
      throw DimensionError("forward: " + std::to_string(input.timesteps.size()) + " timesteps for " +
                           std::to_string(cont_rows.size()) + " continuous positions");
    }
    Tensor temb(Shape{cont_rows.size(), f});
    for (std::size_t i = 0; i < cont_rows.size(); ++i) {
      const auto e = timestep_embedding(input.timesteps[i], f);
      std::copy(e.begin(), e.end(), temb.mutable_data().begin() + static_cast<std::ptrdiff_t>(i * f));
    }
    Var projected = ops::linear(tape.constant(input.patches), *vars.patch_in);
    pieces.push_back(ops::scatter_rows(ops::add(projected, tape.constant(std::move(temb))), cont_rows, N));
  }
  Var h = pieces.front();
  for (std::size_t i = 1; i < pieces.size(); ++i) h = ops::add(h, pieces[i]);
  h = ops::reshape(h, {mask.batch(), mask.length(), f});

  const BlockDims dims = cfg.block_dims();
  const BlockOptions block_opts{cfg.discretization, exec.fused, exec.scan};
  for (std::size_t i = 0; i < vars.blocks.size(); ++i) {
    Var normed = ops::rms_norm(h, vars.norms[i], mask.ids());
    h = ops::add(h, mom_block_forward(normed, vars.blocks[i], mask, dims, block_opts));
  }
  Var out = ops::reshape(ops::rms_norm(h, vars.final_norm, mask.ids()), {N, f});

  ModelOutput result;
  for (std::size_t m = 0; m < cfg.num_discrete(); ++m) {
    if (parts[m].empty()) {
      result.logits.push_back(tape.constant(Tensor(Shape{0, cfg.vocab_sizes[m]})));
      continue;
    }
    result.logits.push_back(ops::linear(ops::gather_rows(out, parts[m]), vars.heads[m]));
  }
  if (!cont_rows.empty()) result.noise_pred = ops::linear(ops::gather_rows(out, cont_rows), *vars.noise_head);
  return result;
}

std::vector<Tensor> forward_lm(const Model& model, const ModelInput& input, const ExecOptions& exec) {
  Tape tape;
  ModelVars vars = bind_model(tape, model, false);
  ModelOutput out = forward(tape, vars, model.cfg, input, exec);
  std::vector<Tensor> logits;
  for (const Var& v : out.logits) logits.push_back(v.value());
  return logits;
}

Tensor forward_diffusion_path(const Model& model, const ModelInput& input, const ExecOptions& exec) {
  if (!model.cfg.has_continuous()) {
    throw UsageError("forward_diffusion_path: model has no continuous modality (continuous_dim = 0)");
  }
  Tape tape;
  ModelVars vars = bind_model(tape, model, false);
  ModelOutput out = forward(tape, vars, model.cfg, input, exec);
  if (!out.noise_pred.valid()) return Tensor(Shape{0, model.cfg.continuous_dim});
  return out.noise_pred.value();
}

Tensor logits_grid(const Tensor& modality_logits, const ModalityMask& mask, int modality) {
  const auto& rows = mask.partition().at(static_cast<std::size_t>(modality));
  if (modality_logits.rank() != 2 || modality_logits.dim(0) != rows.size()) {
    throw DimensionError("logits_grid: " + shape_string(modality_logits.shape()) + " rows do not match modality count " +
                         std::to_string(rows.size()));
  }
  const std::size_t v = modality_logits.dim(1);
  Tensor out(Shape{mask.batch(), mask.length(), v});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < v; ++j) o[rows[i] * v + j] = modality_logits[i * v + j];
  }
  return out;
}

}  // namespace mom
