#include <doctest.h>

#include <cmath>
#include <random>

#include "mom/analysis.hpp"
#include "mom/autodiff.hpp"
#include "mom/errors.hpp"
#include "mom/flop_counter.hpp"
#include "mom/ops.hpp"
#include "test_util.hpp"

using namespace mom;

TEST_CASE("performance gain reproduces published loss pairs") {
  CHECK(std::abs(performance_gain(5.3558, 5.1703) - 3.46) <= 0.01);
  CHECK(std::abs(performance_gain(2.2284, 2.1614) - 3.01) <= 0.01);
  CHECK(std::abs(performance_gain(1.6756, 1.5217) - 9.18) <= 0.01);
  CHECK(performance_gain(3.2, 3.2) == 0.0);
}

TEST_CASE("performance gain rejects non-positive dense loss") {
  CHECK_THROWS_AS(performance_gain(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(performance_gain(-1.0, 1.0), DomainError);
  CHECK_THROWS_AS(performance_gain(std::nan(""), 1.0), DomainError);
}

TEST_CASE("performance gain is antisymmetric around equal losses and scale invariant") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> loss(0.5, 8.0), delta(0.0, 0.5), scale(0.01, 100.0);
  for (int i = 0; i < 200; ++i) {
    const double d = loss(rng), e = delta(rng), c = scale(rng);
    CHECK(performance_gain(d, d - e) == doctest::Approx(-performance_gain(d, d + e)).epsilon(1e-12));
    const double m = d - e;
    CHECK(performance_gain(c * d, c * m) == doctest::Approx(performance_gain(d, m)).epsilon(1e-10));
  }
}

TEST_CASE("loss curves smooth with a trailing window") {
  const LossCurve c({1, 2, 3, 4, 5}, {4, 2, 6, 0, 2}, 2);
  const std::vector<double> expected{4, 3, 4, 3, 1};
  for (std::size_t i = 0; i < 5; ++i) CHECK(c.smoothed()[i] == doctest::Approx(expected[i]));
  CHECK(LossCurve::default_window(10) == 1);
  CHECK(LossCurve::default_window(100) == 2);
  CHECK(LossCurve::default_window(2000) == 40);
  CHECK_THROWS_AS(LossCurve({1}, {1}), ValidationError);
  CHECK_THROWS_AS(LossCurve({1, 1}, {1, 2}), ValidationError);
  CHECK_THROWS_AS(LossCurve({1, 2}, {1, std::nan("")}), ValidationError);
}

TEST_CASE("loss_match of a curve against itself is 100 percent") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> x, y;
  for (int s = 1; s <= 300; ++s) {
    x.push_back(s);
    y.push_back(5.0 * std::exp(-s / 80.0) + 1.0 + noise(rng));
  }
  const LossCurve c(x, y);
  const MatchResult r = loss_match(c, c);
  CHECK(r.matched);
  CHECK(r.relative_percent == 100.0);
}

TEST_CASE("a candidate that reaches the baseline's final loss at step 100 of 250 needs 40 percent") {
  std::vector<double> x, base, cand;
  for (int s = 1; s <= 250; ++s) {
    x.push_back(s);
    base.push_back(10.0 - s / 25.0);
    cand.push_back(10.0 - s / 10.0);
  }
  const MatchResult r = loss_match(LossCurve(x, base, 1), LossCurve(x, cand, 1));
  CHECK(r.target == doctest::Approx(0.0));
  CHECK(r.baseline_x == doctest::Approx(250.0));
  CHECK(r.candidate_x == doctest::Approx(100.0));
  CHECK(r.relative_percent == doctest::Approx(40.0));
}

TEST_CASE("a 2.5x step speedup is 40 percent relative FLOPs") {
  std::vector<double> x, base, cand;
  for (int s = 1; s <= 500; ++s) {
    x.push_back(s);
    base.push_back(3.0 / std::sqrt(static_cast<double>(s)));
    cand.push_back(3.0 / std::sqrt(2.5 * s));
  }
  const MatchResult r = loss_match(LossCurve(x, base, 1), LossCurve(x, cand, 1));
  CHECK(r.relative_percent == doctest::Approx(40.0).epsilon(1e-9));
}

TEST_CASE("loss_match interpolates between points and reports misses") {
  const LossCurve base({0, 10, 20}, {3, 2, 1}, 1);
  const LossCurve cand({0, 10, 20}, {3, 1.5, 1.4}, 1);
  const MatchResult hit = loss_match(base, cand, 2.0);
  CHECK(hit.baseline_x == doctest::Approx(10.0));
  CHECK(hit.candidate_x == doctest::Approx(20.0 / 3.0));
  const MatchResult miss = loss_match(base, cand);
  CHECK_FALSE(miss.matched);
  CHECK(miss.candidate_best == doctest::Approx(1.4));
  CHECK_THROWS_AS(loss_match(base, cand, 0.5), ValidationError);
  CHECK_THROWS_AS(loss_match(base, LossCurve({0, 10, 20}, {3, 1.5, 1.4}, 2)), ValidationError);
}

TEST_CASE("a pointwise-lower candidate never needs a larger fraction") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x, base, a, b;
    double level = 6.0;
    for (int s = 1; s <= 60; ++s) {
      level -= 0.1 * u(rng);
      x.push_back(s);
      base.push_back(level + 0.2 * u(rng));
      const double c = level + 0.3 * (u(rng) - 0.5);
      a.push_back(c);
      b.push_back(c - 0.2 * u(rng));
    }
    const LossCurve bc(x, base), ac(x, a), lower(x, b);
    const MatchResult ra = loss_match(bc, ac), rb = loss_match(bc, lower);
    if (ra.matched) {
      REQUIRE(rb.matched);
      CHECK(rb.relative_percent <= ra.relative_percent);
    }
  }
}

TEST_CASE("an isolated 4 to 8 linear costs 64 FLOPs per token") {
  std::mt19937_64 rng(1);
  Tape tape;
  const Var x = tape.constant(testing::random_tensor({5, 4}, rng));
  const Var w = tape.constant(testing::random_tensor({4, 8}, rng));
  flops::ScopedCounter counter;
  ops::linear(x, w);
  CHECK(counter.total() == 5 * 64);
}

namespace {

ModelConfig tiny_config(SparsityConfig s, std::size_t continuous_dim = 0) {
  ModelConfig cfg;
  cfg.f = 16;
  cfg.layers = 2;
  cfg.vocab_sizes = {13, 9, 21};
  cfg.continuous_dim = continuous_dim;
  cfg.sparsity = s;
  return cfg;
}

}  // namespace

TEST_CASE("per-token FLOPs follow the hand-counted breakdown") {
  const ModelConfig cfg = tiny_config(SparsityConfig::dense());
  // f=16 -> d=32, n=16, r=1, k=4; two layers.
  const FlopsBreakdown b = flops_breakdown(cfg);
  CHECK(b.in_proj == 2 * 2 * 16 * 64);
  CHECK(b.conv == 2 * 2 * 32 * 4);
  CHECK(b.x_proj == 2 * 2 * 32 * 33);
  CHECK(b.dt_proj == 2 * 2 * 1 * 32);
  CHECK(b.scan == 2 * 6 * 32 * 16);
  CHECK(b.gate == 2 * 2 * 32);
  CHECK(b.out_proj == 2 * 2 * 32 * 16);
  CHECK(b.modality == std::vector<std::uint64_t>{2 * 16 * 13, 2 * 16 * 9, 2 * 16 * 21});
  const double uniform = (3.0 * static_cast<double>(b.block()) + 2.0 * 16 * (13 + 9 + 21)) / 3.0;
  CHECK(flops_per_token(cfg) == doctest::Approx(uniform));
  const std::vector<double> mix{1.0, 0.0, 0.0};
  CHECK(flops_per_token(cfg, mix) == doctest::Approx(static_cast<double>(b.token(0))));
}

TEST_CASE("per-token FLOPs are identical across all 16 sparsity configurations") {
  const FlopsBreakdown dense = flops_breakdown(tiny_config(SparsityConfig::dense()));
  const double per_token = flops_per_token(tiny_config(SparsityConfig::dense()));
  for (const SparsityConfig& s : enumerate_sparsity_configs()) {
    const ModelConfig cfg = tiny_config(s);
    CHECK(flops_per_token(cfg) == per_token);
    CHECK(flops_breakdown(cfg).block() == dense.block());
    CHECK(flops_breakdown(cfg).modality == dense.modality);
  }
}

TEST_CASE("analytic FLOPs equal the instrumented count of a real forward pass") {
  std::mt19937_64 rng(4);
  for (std::size_t cd : {std::size_t{0}, std::size_t{5}}) {
    for (const SparsityConfig& s : {SparsityConfig::dense(), SparsityConfig::all(), SparsityConfig::from_bits(6)}) {
      const ModelConfig cfg = tiny_config(s, cd);
      const Model model = build_model(cfg, 3);
      const std::size_t b = 2, len = 12, M = cfg.num_modalities();
      std::vector<int> ids(b * len), tokens(b * len, 0);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = static_cast<int>(rng() % M);
        if (static_cast<std::size_t>(ids[i]) < 3) {
          tokens[i] = static_cast<int>(rng() % cfg.vocab_sizes[static_cast<std::size_t>(ids[i])]);
        }
      }
      ModalityMask mask(b, len, M, ids);
      ModelInput input{mask, tokens, Tensor(Shape{cd == 0 ? 0 : mask.count(3), cd}),
                       std::vector<int>(cd == 0 ? 0 : mask.count(3), 10)};
      std::uint64_t counted = 0;
      {
        flops::ScopedCounter counter;
        Tape tape;
        const ModelVars vars = bind_model(tape, model, false);
        forward(tape, vars, cfg, input);
        counted = counter.total();
      }
      std::vector<std::size_t> counts(M);
      for (std::size_t m = 0; m < M; ++m) counts[m] = mask.count(m);
      CAPTURE(cd);
      CAPTURE(s.name());
      CHECK(flops_for_tokens(cfg, counts) == counted);
      CHECK(training_step_flops(cfg, mask) == 3 * counted);
    }
  }
}
