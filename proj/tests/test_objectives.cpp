#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "mom/errors.hpp"
#include "mom/objectives.hpp"
#include "test_util.hpp"

using namespace mom;
using mom::testing::random_tensor;

TEST_CASE("cosine schedule: worked values") {
  CHECK(cosine_alpha_bar(0, 1000) == 1.0);
  CHECK(cosine_alpha_bar(500, 1000) == doctest::Approx(0.5).epsilon(1e-15));
  // cos^2((1 - c) pi/2) = sin^2(c pi/2)
  const double s = std::sin(1e-3 * std::numbers::pi / 2.0);
  CHECK(cosine_alpha_bar(1000, 1000, 1e-3) == doctest::Approx(s * s).epsilon(1e-9));
  CHECK(cosine_alpha_bar(1000, 1000, 1e-3) == doctest::Approx(2.467e-6).epsilon(1e-3));
  CHECK_THROWS_AS(cosine_alpha_bar(1001, 1000), RangeError);
}

TEST_CASE("cosine schedule: endpoints and strict decrease") {
  const DiffusionSchedule s = DiffusionSchedule::cosine(1000);
  CHECK(std::abs(s.at(0) - 1.0) <= 1e-12);
  CHECK(s.at(1000) > 0.0);
  for (std::size_t t = 1; t <= 1000; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
  // A clip of 1e-3 flattens the last step at T = 1000.
  CHECK_THROWS_AS(DiffusionSchedule::cosine(1000, 1e-3), ConfigError);
  CHECK_NOTHROW(DiffusionSchedule::cosine(100, 1e-3));
}

TEST_CASE("ddpm noise: t = 0 is exact, round trip, and the t -> T limit") {
  std::mt19937_64 rng(1);
  const DiffusionSchedule s = DiffusionSchedule::cosine(1000);
  const Tensor x0 = random_tensor({5, 4}, rng);
  Noised n0 = ddpm_noise(x0, 0, s, rng);
  CHECK(bitwise_equal(n0.x_t, x0));
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t t = rng() % 1000;
    Noised nt = ddpm_noise(x0, t, s, rng);
    CHECK(max_abs_diff(ddpm_reconstruct(nt.x_t, nt.eps, t, s), x0) <= 1e-12);
  }
  Noised nT = ddpm_noise(x0, 1000, s, rng);
  CHECK(max_abs_diff(nT.x_t, nT.eps) < 1e-3);
}

TEST_CASE("next-token targets stay inside a modality segment") {
  ModalityMask mask(1, 6, 3, {0, 0, 1, 1, 2, 0});
  const std::vector<int> tokens = {4, 5, 6, 7, 0, 8};
  CHECK(next_token_targets(tokens, mask, 2) == std::vector<int>{5, -1, 7, -1, -1, -1});
  ModalityMask two(2, 2, 1, {0, 0, 0, 0});
  CHECK(next_token_targets(std::vector<int>{1, 2, 3, 4}, two, 1) == std::vector<int>{2, -1, 4, -1});
}

TEST_CASE("autoregressive loss: uniform logits give ln V") {
  ModalityMask mask = ModalityMask::uniform(2, 5, 1);
  std::vector<int> tokens = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const Tensor logits(Shape{10, 11}, 0.25);
  LossBreakdown lb = autoregressive_loss(std::vector<Tensor>{logits}, tokens, mask);
  CHECK(std::abs(lb.per_modality[0].mean - std::log(11.0)) < 1e-9);
  CHECK(lb.per_modality[0].count == 8);
}

TEST_CASE("autoregressive loss: confident correct logits give ~0") {
  ModalityMask mask = ModalityMask::uniform(1, 3, 1);
  std::vector<int> tokens = {0, 2, 1};
  Tensor logits(Shape{3, 4});
  logits.mutable_data()[0 * 4 + 2] = 40.0;
  logits.mutable_data()[1 * 4 + 1] = 40.0;
  LossBreakdown lb = autoregressive_loss(std::vector<Tensor>{logits}, tokens, mask);
  CHECK(lb.per_modality[0].mean < 1e-12);
}

TEST_CASE("autoregressive loss: hand-computed two-position example") {
  ModalityMask mask = ModalityMask::uniform(1, 3, 1);
  std::vector<int> tokens = {0, 1, 0};
  const Tensor logits = Tensor::of({3, 2}, {1.0, 2.0, 0.5, -0.5, 9.0, 9.0});
  // -log softmax([1,2])[1] and -log softmax([0.5,-0.5])[0]
  const double l1 = -(2.0 - std::log(std::exp(1.0) + std::exp(2.0)));
  const double l2 = -(0.5 - std::log(std::exp(0.5) + std::exp(-0.5)));
  LossBreakdown lb = autoregressive_loss(std::vector<Tensor>{logits}, tokens, mask);
  CHECK(lb.per_modality[0].mean == doctest::Approx((l1 + l2) / 2).epsilon(1e-14));
  CHECK(lb.total == doctest::Approx((l1 + l2) / 2).epsilon(1e-14));
}

TEST_CASE("autoregressive loss: absent modality is undefined, total recombines") {
  std::mt19937_64 rng(2);
  ModalityMask mask(2, 6, 3, {0, 0, 0, 2, 2, 2, 0, 0, 2, 2, 2, 2});
  std::vector<int> tokens(12);
  for (int& t : tokens) t = static_cast<int>(rng() % 5);
  std::vector<Tensor> logits = {random_tensor({5, 5}, rng), Tensor(Shape{0, 5}), random_tensor({7, 5}, rng)};
  LossBreakdown lb = autoregressive_loss(logits, tokens, mask);
  CHECK(lb.per_modality[1].count == 0);
  CHECK(std::isnan(lb.per_modality[1].mean));
  CHECK_FALSE(lb.per_modality[1].defined());
  CHECK(lb.per_modality[0].count == 3);
  CHECK(lb.per_modality[2].count == 5);
  const double recombined =
      (lb.per_modality[0].mean * 3 + lb.per_modality[2].mean * 5) / 8.0;
  CHECK(std::abs(lb.total - recombined) <= 1e-12);
  const int all[] = {0, 1, 2};
  CHECK(std::abs(lb.weighted_mean(all) - lb.total) <= 1e-12);
}

TEST_CASE("ddpm loss") {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({3, 4}, rng);
  CHECK(ddpm_loss(a, a) == 0.0);
  CHECK(ddpm_loss(Tensor(Shape{4}), Tensor(Shape{4}, 1.0)) == 1.0);
  const Tensor b = random_tensor({3, 4}, rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < 12; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(ddpm_loss(a, b) == doctest::Approx(acc / 12).epsilon(1e-14));
  CHECK_THROWS_AS(ddpm_loss(a, Tensor(Shape{4, 3})), DimensionError);
}

TEST_CASE("combined loss") {
  CHECK(combined_loss(2.0, 0.7, 0.0) == 2.0);
  CHECK(combined_loss(0.0, 0.7, 5.0) == 5.0 * 0.7);
  CHECK(combined_loss(2.0, 0.22, 5.0) == doctest::Approx(3.1).epsilon(1e-14));
  CHECK_THROWS_AS(combined_loss(1.0, 1.0, -1.0), ParameterError);
}
