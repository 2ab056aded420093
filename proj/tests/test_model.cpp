#include "doctest.h"

#include <cmath>
#include <map>
#include <random>

#include "mom/errors.hpp"
#include "mom/model.hpp"
#include "mom/objectives.hpp"
#include "mom/ops.hpp"
#include "test_util.hpp"

using namespace mom;
using mom::testing::random_tensor;

namespace {

ModelConfig tiny(std::vector<std::size_t> vocabs, std::size_t cont = 0) {
  ModelConfig cfg;
  cfg.f = 8;
  cfg.layers = 2;
  cfg.n = 4;
  cfg.vocab_sizes = std::move(vocabs);
  cfg.continuous_dim = cont;
  return cfg;
}

std::vector<int> random_tokens(const ModalityMask& mask, const ModelConfig& cfg, std::mt19937_64& rng) {
  std::vector<int> tokens(mask.tokens(), 0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto m = static_cast<std::size_t>(mask.ids()[i]);
    if (m < cfg.num_discrete()) tokens[i] = static_cast<int>(rng() % cfg.vocab_sizes[m]);
  }
  return tokens;
}

// Contiguous segments cycling through the modalities.
std::vector<int> segmented_ids(std::size_t b, std::size_t len, int modalities, std::size_t seg) {
  std::vector<int> ids(b * len);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < len; ++t) ids[i * len + t] = static_cast<int>((t / seg + i) % modalities);
  }
  return ids;
}

ModelInput make_input(const ModelConfig& cfg, ModalityMask mask, std::mt19937_64& rng) {
  ModelInput in{std::move(mask), {}, Tensor(), {}};
  in.tokens = random_tokens(in.mask, cfg, rng);
  if (cfg.has_continuous()) {
    const std::size_t c = in.mask.count(static_cast<std::size_t>(cfg.continuous_id()));
    in.patches = random_tensor({c, cfg.continuous_dim}, rng);
    in.timesteps.assign(c, 17);
  }
  return in;
}

std::map<std::string, Tensor> snapshot(const Model& m) {
  std::map<std::string, Tensor> out;
  m.visit([&](const std::string& k, const Tensor& t) { out.emplace(k, t); });
  return out;
}

}  // namespace

TEST_CASE("build_model: same config and seed give identical parameters") {
  ModelConfig cfg = tiny({11, 7});
  cfg.sparsity = SparsityConfig::all();
  auto a = snapshot(build_model(cfg, 5)), b = snapshot(build_model(cfg, 5));
  REQUIRE(a.size() == b.size());
  for (const auto& [key, t] : a) CHECK(bitwise_equal(t, b.at(key)));
  auto c = snapshot(build_model(cfg, 6));
  CHECK_FALSE(bitwise_equal(a.at("layer.0.in_proj.0"), c.at("layer.0.in_proj.0")));
}

TEST_CASE("build_model: dense config has one tensor per projection per layer") {
  Model m = build_model(tiny({11, 7}), 1);
  for (const auto& b : m.blocks) {
    CHECK(b.in_proj.weights.size() == 1);
    CHECK(b.x_proj.weights.size() == 1);
    CHECK(b.dt_proj.weights.size() == 1);
    CHECK(b.dt_proj.biases.size() == 1);
    CHECK(b.out_proj.weights.size() == 1);
  }
}

TEST_CASE("build_model: decoupled copies do not alias") {
  ModelConfig cfg = tiny({5, 5});
  cfg.sparsity = SparsityConfig::all();
  Model m = build_model(cfg, 2);
  m.blocks[0].in_proj.weights[0].mutable_data()[0] += 1.0;
  CHECK(m.blocks[0].in_proj.weights[1][0] != m.blocks[0].in_proj.weights[0][0]);
}

TEST_CASE("parameter count matches an independent tally") {
  // f=64, 2 layers, 2 discrete modalities (vocab 50 and 40), every projection decoupled.
  // d = 128, r = 4, n = 16, k = 4.
  const std::size_t f = 64, d = 128, r = 4, n = 16, k = 4, M = 2;
  const std::size_t per_layer = M * f * (2 * d)    // in_proj
                                + M * d * (r + 2 * n)  // x_proj
                                + M * (r * d + d)      // dt_proj weight + bias
                                + M * d * f            // out_proj
                                + d * k + d * n + f;   // conv, A, norm gain
  const std::size_t expected = 2 * per_layer + f + (50 + 40) * f * 2;
  CHECK(expected == 136128);

  ModelConfig cfg;
  cfg.f = 64;
  cfg.layers = 2;
  cfg.vocab_sizes = {50, 40};
  cfg.sparsity = SparsityConfig::all();
  CHECK(parameter_count(cfg) == expected);
  CHECK(build_model(cfg, 0).parameter_count() == expected);
}

TEST_CASE("parameter count grows with decoupling") {
  ModelConfig cfg = tiny({9, 9, 9});
  std::size_t dense = parameter_count(cfg);
  for (const auto& sc : enumerate_sparsity_configs()) {
    cfg.sparsity = sc;
    const std::size_t count = parameter_count(cfg);
    CHECK(count == build_model(cfg, 3).parameter_count());
    if (sc.bits() != 0) CHECK(count > dense);
  }
}

TEST_CASE("config validation names the field") {
  ModelConfig cfg = tiny({5});
  cfg.layers = 0;
  try {
    build_model(cfg, 0);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "model.layers");
  }
  cfg = tiny({});
  CHECK_THROWS_AS(build_model(cfg, 0), ConfigError);
  CHECK_THROWS_AS(preset("no-such-preset", {5}), ConfigError);
}

TEST_CASE("presets keep the published ratios at desk scale") {
  for (const auto& p : preset_shapes()) {
    if (p.name.rfind("full-", 0) == 0) continue;
    bool found = false;
    for (const auto& q : preset_shapes()) {
      if (q.name != "full-" + p.name) continue;
      found = true;
      CHECK(p.f * 8 == q.f);
      CHECK(p.layers == (q.layers + 3) / 4);
    }
    CHECK(found);
  }
  ModelConfig cfg = preset("443M", {64, 64, 500});
  CHECK(cfg.f == 128);
  CHECK(cfg.layers == 6);
}

TEST_CASE("forward_lm: logits shape for a single text modality") {
  std::mt19937_64 rng(4);
  ModelConfig cfg = tiny({11});
  Model m = build_model(cfg, 4);
  ModelInput in = make_input(cfg, ModalityMask::uniform(2, 8, 1), rng);
  auto logits = forward_lm(m, in);
  REQUIRE(logits.size() == 1);
  CHECK(logits[0].shape() == Shape{16, 11});
  CHECK(logits_grid(logits[0], in.mask, 0).shape() == Shape{2, 8, 11});
}

TEST_CASE("forward_lm: zero blocks and unit embeddings give position-independent logits") {
  std::mt19937_64 rng(5);
  ModelConfig cfg = tiny({6});
  cfg.layers = 1;
  cfg.zero_init_heads = false;
  Model m = build_model(cfg, 5);
  m.visit([](const std::string& key, Tensor& t) {
    if (key.rfind("embed.", 0) == 0) {
      t = Tensor(t.shape(), 1.0);
    } else if (key.rfind("layer.", 0) == 0 && key.find("norm") == std::string::npos) {
      t = Tensor(t.shape(), 0.0);
    }
  });
  ModelInput in = make_input(cfg, ModalityMask::uniform(1, 7, 1), rng);
  Tensor logits = forward_lm(m, in)[0];
  for (std::size_t t = 1; t < 7; ++t) {
    for (std::size_t j = 0; j < 6; ++j) CHECK(logits[t * 6 + j] == logits[j]);
  }
}

TEST_CASE("forward_lm: changing a token never changes earlier logits") {
  std::mt19937_64 rng(6);
  ModelConfig cfg = tiny({7, 9, 5});
  cfg.sparsity = SparsityConfig::all();
  cfg.zero_init_heads = false;
  Model m = build_model(cfg, 6);
  ModelInput in = make_input(cfg, ModalityMask(2, 12, 3, segmented_ids(2, 12, 3, 4)), rng);
  const auto base = forward_lm(m, in);
  for (std::size_t probe : {3u, 6u, 11u}) {
    ModelInput changed = in;
    const auto mod = static_cast<std::size_t>(in.mask.ids()[probe]);
    changed.tokens[probe] = (changed.tokens[probe] + 1) % static_cast<int>(cfg.vocab_sizes[mod]);
    const auto after = forward_lm(m, changed);
    for (std::size_t md = 0; md < 3; ++md) {
      const auto& rows = in.mask.partition()[md];
      const std::size_t v = cfg.vocab_sizes[md];
      bool later_changed = false;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool same_seq = rows[i] / 12 == probe / 12;
        for (std::size_t j = 0; j < v; ++j) {
          const bool equal = base[md][i * v + j] == after[md][i * v + j];
          if (!same_seq || rows[i] < probe) CHECK(equal);
          if (same_seq && rows[i] >= probe && !equal) later_changed = true;
        }
      }
      if (md == mod) CHECK(later_changed);
    }
  }
}

TEST_CASE("forward_lm: out-of-vocabulary token names its position") {
  std::mt19937_64 rng(7);
  ModelConfig cfg = tiny({5});
  Model m = build_model(cfg, 7);
  ModelInput in = make_input(cfg, ModalityMask::uniform(1, 4, 1), rng);
  in.tokens[2] = 5;
  try {
    forward_lm(m, in);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("position 2") != std::string::npos);
  }
}

TEST_CASE("step-0 forward equals the dense model for every sparsity config") {
  std::mt19937_64 rng(8);
  ModelConfig dense_cfg = tiny({7, 9, 5});
  dense_cfg.zero_init_heads = false;
  Model dense = build_model(dense_cfg, 11);
  ModelInput in = make_input(dense_cfg, ModalityMask(2, 10, 3, segmented_ids(2, 10, 3, 3)), rng);
  const auto want = forward_lm(dense, in);
  for (const auto& sc : enumerate_sparsity_configs()) {
    ModelConfig cfg = dense_cfg;
    cfg.sparsity = sc;
    const auto got = forward_lm(build_model(cfg, 11), in);
    for (std::size_t m = 0; m < 3; ++m) CHECK(max_abs_diff(got[m], want[m]) <= 1e-10);
  }
}

TEST_CASE("diffusion path: shapes, zero heads, unsupported without patches") {
  std::mt19937_64 rng(9);
  ModelConfig cfg = tiny({6}, 8);
  Model m = build_model(cfg, 9);
  std::vector<int> ids = {0, 0, 1, 1, 1, 1, 0, 0};
  ModelInput in = make_input(cfg, ModalityMask(1, 8, 2, ids), rng);
  Tensor eps = forward_diffusion_path(m, in);
  CHECK(eps.shape() == Shape{4, 8});
  for (double v : eps.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(forward_diffusion_path(build_model(tiny({6}), 9), make_input(tiny({6}), ModalityMask::uniform(1, 3, 1), rng)),
                  UsageError);
}

TEST_CASE("diffusion path: text after an image does not affect its noise prediction") {
  std::mt19937_64 rng(10);
  ModelConfig cfg = tiny({6}, 3);
  cfg.zero_init_heads = false;
  cfg.sparsity = SparsityConfig::all();
  Model m = build_model(cfg, 10);
  std::vector<int> ids = {0, 0, 1, 1, 1, 0, 0, 0};
  ModelInput in = make_input(cfg, ModalityMask(1, 8, 2, ids), rng);
  const Tensor base = forward_diffusion_path(m, in);
  ModelInput changed = in;
  for (std::size_t t = 5; t < 8; ++t) changed.tokens[t] = (changed.tokens[t] + 1) % 6;
  CHECK(bitwise_equal(forward_diffusion_path(m, changed), base));
  changed = in;
  changed.tokens[1] = (changed.tokens[1] + 1) % 6;
  CHECK_FALSE(bitwise_equal(forward_diffusion_path(m, changed), base));
}

TEST_CASE("timestep embedding: sin and cos halves") {
  auto e = timestep_embedding(0, 6);
  CHECK(e == std::vector<double>{0, 0, 0, 1, 1, 1});
  auto g = timestep_embedding(3, 5);
  CHECK(g[0] == doctest::Approx(std::sin(3.0)));
  CHECK(g[2] == doctest::Approx(std::cos(3.0)));
  CHECK(g[4] == 0.0);
}

TEST_CASE("zero heads give ln V per modality regardless of tokens") {
  std::mt19937_64 rng(12);
  ModelConfig cfg = tiny({7, 13});
  cfg.sparsity = SparsityConfig::all();
  Model m = build_model(cfg, 12);
  ModelInput in = make_input(cfg, ModalityMask(2, 12, 2, segmented_ids(2, 12, 2, 4)), rng);
  LossBreakdown lb = autoregressive_loss(forward_lm(m, in), in.tokens, in.mask);
  CHECK(std::abs(lb.per_modality[0].mean - std::log(7.0)) < 1e-12);
  CHECK(std::abs(lb.per_modality[1].mean - std::log(13.0)) < 1e-12);
}

TEST_CASE("full model gradients match central differences") {
  std::mt19937_64 rng(13);
  ModelConfig cfg;
  cfg.f = 4;
  cfg.layers = 2;
  cfg.n = 2;
  cfg.vocab_sizes = {5, 4};
  cfg.continuous_dim = 3;
  cfg.zero_init_heads = false;
  cfg.shared_norm = false;
  cfg.sparsity = SparsityConfig::from_bits(0b0101);
  Model model = build_model(cfg, 13);
  // Larger than init scale so every path contributes a measurable gradient.
  model.visit([&](const std::string& key, Tensor& t) {
    if (key.find("A_log") != std::string::npos || key.find("norm") != std::string::npos) return;
    t = random_tensor(t.shape(), rng, -0.5, 0.5);
  });
  std::vector<int> ids = {0, 0, 2, 2, 1, 1, 0, 1, 1, 2, 0, 0};
  ModelInput in = make_input(cfg, ModalityMask(2, 6, 3, ids), rng);
  const Tensor eps = random_tensor(in.patches.shape(), rng);
  std::vector<Tensor> params;
  model.visit([&](const std::string&, const Tensor& t) { params.push_back(t); });
  const double err = grad_check(
      [&](Tape& tape, std::span<const Var> v) {
        ModelVars vars = assemble_model_vars(model, {v.begin(), v.end()});
        ModelOutput out = forward(tape, vars, cfg, in);
        LmLoss lm = autoregressive_loss(out.logits, in.tokens, in.mask);
        const Var terms[] = {lm.total, ddpm_loss(out.noise_pred, tape.constant(eps))};
        const double coeffs[] = {1.0, 5.0};
        return ops::weighted_sum(terms, coeffs);
      },
      params, 1e-4);
  // Some dt_proj entries have gradients near 1e-8; a 1e-5 step leaves them
  // dominated by rounding in the central difference.
  CHECK(err < 1e-4);
}
