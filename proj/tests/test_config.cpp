#include <doctest.h>

#include "mom/config.hpp"
#include "mom/errors.hpp"

using namespace mom;

namespace {

std::string field_of(const std::string& ini, const std::vector<std::string>& overrides = {}) {
  try {
    auto tree = parse_ini(ini);
    for (const auto& o : overrides) apply_override(tree, o);
    tool_config_from_tree(tree);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("an empty config resolves to the declared defaults") {
  const ToolConfig c = tool_config_from_tree(parse_ini(""));
  CHECK(c.run.model.f == 64);
  CHECK(c.run.model.vocab_sizes == std::vector<std::size_t>{256, 1024, 500});
  CHECK(c.run.objective == Objective::uniform);
  CHECK(c.run.optim.lr == 3e-4);
  CHECK(c.run.optim.beta2 == 0.95);
  CHECK(c.run.optim.weight_decay == 0.1);
  CHECK(c.run.optim.grad_clip_norm == 1.0);
  CHECK_FALSE(c.run.optim.warmup_steps.has_value());
  CHECK(c.analysis.final_fraction == 0.1);
}

TEST_CASE("INI sections set every layer of the run") {
  const std::string ini = R"(
[model]
preset = 94M
layers = 3
sparsity = in_proj+out_proj
discretization = literal

[data]
setting = text_and_patches
vocab = 64
patch_dim = 6
batch = 3
seq_len = 40

[optim]
lr = 0.002
steps = 77
warmup_steps = 5
seed = 9

[train]
diffusion_lambda = 2.5
scan = chunked
chunk = 8

[analysis]
window = 4
)";
  const ToolConfig c = tool_config_from_tree(parse_ini(ini));
  CHECK(c.run.model.f == 64);
  CHECK(c.run.model.layers == 3);
  CHECK(c.run.model.preset_name == "94M");
  CHECK(c.run.model.sparsity == SparsityConfig{true, false, false, true});
  CHECK(c.run.model.discretization == Discretization::literal);
  CHECK(c.run.model.vocab_sizes == std::vector<std::size_t>{64});
  CHECK(c.run.model.continuous_dim == 6);
  CHECK(c.run.objective == Objective::transfusion);
  CHECK(c.run.data.batch == 3);
  CHECK(c.run.optim.total_steps == 77);
  CHECK(c.run.optim.warmup_steps == std::optional<std::size_t>(5));
  CHECK(c.run.optim.seed == 9);
  CHECK(c.run.diffusion_lambda == 2.5);
  CHECK(c.run.exec.scan.impl == ScanImpl::chunked);
  CHECK(c.run.exec.scan.chunk == 8);
  CHECK(c.analysis.window == 4);
}

TEST_CASE("overrides replace or add section keys") {
  auto tree = parse_ini("[optim]\nsteps = 10\n");
  apply_override(tree, "optim.steps=0");
  apply_override(tree, "model.sparsity=all");
  apply_override(tree, "data.heterogeneity=0");
  apply_override(tree, "data.vocab=500");
  const ToolConfig c = tool_config_from_tree(tree);
  CHECK(c.run.optim.total_steps == 0);
  CHECK(c.run.model.sparsity == SparsityConfig::all());
  CHECK(c.run.data.heterogeneity == 0.0);
  CHECK_THROWS_AS(apply_override(tree, "optim.steps"), ConfigError);
  CHECK_THROWS_AS(apply_override(tree, "steps=3"), ConfigError);
}

TEST_CASE("bad configs report the offending field") {
  CHECK(field_of("[model]\nwidth = 3\n") == "model.width");
  CHECK(field_of("[models]\nf = 3\n") == "models");
  CHECK(field_of("[optim]\nlr = fast\n") == "optim.lr");
  CHECK(field_of("[optim]\nsteps = -4\n") == "optim.steps");
  CHECK(field_of("[model]\nsparsity = in_proj+gate\n") == "model.sparsity");
  CHECK(field_of("[model]\npreset = 7B\n") == "model.preset");
  CHECK(field_of("[data]\nsetting = video\n") == "data.setting");
  CHECK(field_of("[train]\nobjective = uniform\n[data]\nsetting = text_and_patches\n") == "train.objective");
  CHECK(field_of("", {"optim.beta1=1"}) == "optim.beta1");
  CHECK(field_of("[data]\nheterogeneity = 0\n") == "data.heterogeneity");
  CHECK(field_of("[model\nf=1\n") == "config");
}

TEST_CASE("tool configs round-trip through JSON losslessly") {
  auto tree = parse_ini("[data]\nsetting = text_and_patches\n[optim]\nlr = 0.1234567890123\nwarmup_steps = 3\n");
  apply_override(tree, "model.sparsity=x_proj+dt_proj");
  const ToolConfig c = tool_config_from_tree(tree);
  const nlohmann::json j = to_json(c);
  const ToolConfig back = tool_config_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back) == j);
  CHECK(back.run.optim.lr == c.run.optim.lr);
  CHECK(back.run.model.sparsity == c.run.model.sparsity);
  CHECK(back.run.data.modalities[1].kind == ModalityKind::continuous);

  nlohmann::json broken = j;
  broken["run"]["model"].erase("f");
  try {
    tool_config_from_json(broken);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "model.f");
  }
}

TEST_CASE("sparsity names parse back to the same configuration") {
  for (const SparsityConfig& s : enumerate_sparsity_configs()) CHECK(parse_sparsity(sparsity_to_string(s)) == s);
}

TEST_CASE("vocab sets every discrete stream and per-stream keys override it") {
  const ToolConfig c = tool_config_from_tree(parse_ini("[data]\nvocab = 256\nheterogeneity = 0\n"));
  CHECK(c.run.model.vocab_sizes == std::vector<std::size_t>{256, 256, 256});
  const ToolConfig d = tool_config_from_tree(parse_ini("[data]\nvocab = 64\nimage_vocab = 80\n"));
  CHECK(d.run.model.vocab_sizes == std::vector<std::size_t>{64, 80, 64});
  CHECK(c.run.data.heterogeneity == 0.0);
  CHECK(field_of("[data]\nheterogeneity = 0\n") == "data.heterogeneity");
  CHECK(field_of("[data]\nsetting = two_modality\nspeech_vocab = 256\n") == "data.speech_vocab");
}
