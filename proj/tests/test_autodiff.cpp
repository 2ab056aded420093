#include "doctest.h"

#include <cmath>
#include <random>

#include "mom/autodiff.hpp"
#include "mom/errors.hpp"
#include "mom/ops.hpp"
#include "test_util.hpp"

using namespace mom;
using mom::testing::identity;
using mom::testing::random_tensor;

namespace {

// Random projection of an op's output to a scalar, so every output entry
// reaches the gradient with a distinct weight.
Var project(Tape& tape, const Var& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Var w = tape.constant(random_tensor(out.shape(), rng));
  return ops::sum(ops::mul(out, w));
}

}  // namespace

TEST_CASE("linear: identity weight and zero bias reproduce X") {
  std::mt19937_64 rng(1);
  Tape tape;
  Tensor x = random_tensor({2, 3, 4}, rng);
  Var y = ops::linear(tape.constant(x), tape.constant(identity(4)), tape.constant(Tensor(Shape{4})));
  CHECK(bitwise_equal(y.value(), x));
}

TEST_CASE("linear: zero input gives bias rows") {
  std::mt19937_64 rng(2);
  Tape tape;
  Tensor w = random_tensor({3, 2}, rng);
  Var y = ops::linear(tape.constant(Tensor(Shape{1, 4, 3})), tape.constant(w), tape.constant(Tensor::of({2}, {0.25, -1})));
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(y.value()[r * 2] == 0.25);
    CHECK(y.value()[r * 2 + 1] == -1.0);
  }
}

TEST_CASE("linear: hand dot product") {
  Tape tape;
  Var y = ops::linear(tape.constant(Tensor::of({1, 1, 2}, {2, 3})), tape.constant(Tensor::of({2, 1}, {1, 1})),
                      tape.constant(Tensor::of({1}, {0.5})));
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y.value()[0] == 5.5);
}

TEST_CASE("linear: shape mismatch names the axes") {
  Tape tape;
  Var x = tape.constant(Tensor(Shape{1, 2, 3}));
  Var w = tape.constant(Tensor(Shape{4, 2}));
  try {
    ops::linear(x, w);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("f_in=3") != std::string::npos);
    CHECK(std::string(e.what()).find("W axis 0") != std::string::npos);
  }
}

TEST_CASE("conv1d: identity kernel, hand example, zeros") {
  std::mt19937_64 rng(3);
  Tape tape;
  Tensor x = random_tensor({2, 5, 3}, rng);
  Tensor kernel(Shape{3, 4});
  for (std::size_t c = 0; c < 3; ++c) kernel.mutable_data()[c * 4 + 3] = 1.0;
  CHECK(bitwise_equal(ops::conv1d_causal_depthwise(tape.constant(x), tape.constant(kernel)).value(), x));

  Var y = ops::conv1d_causal_depthwise(tape.constant(Tensor::of({1, 3, 1}, {1, 2, 3})),
                                       tape.constant(Tensor::of({1, 2}, {1, 1})));
  CHECK(y.value()[0] == 1.0);
  CHECK(y.value()[1] == 3.0);
  CHECK(y.value()[2] == 5.0);
}

TEST_CASE("conv1d: zeros in, zeros out; kernel wider than the sequence") {
  std::mt19937_64 rng(4);
  Tape tape;
  Tensor kernel = random_tensor({2, 6}, rng);
  Var y = ops::conv1d_causal_depthwise(tape.constant(Tensor(Shape{1, 3, 2})), tape.constant(kernel));
  for (double v : y.value().data()) CHECK(v == 0.0);
  Var y2 = ops::conv1d_causal_depthwise(tape.constant(random_tensor({1, 3, 2}, rng)), tape.constant(kernel));
  CHECK(y2.shape() == Shape{1, 3, 2});
  CHECK_THROWS_AS(ops::conv1d_causal_depthwise(tape.constant(Tensor(Shape{1, 3, 2})), tape.constant(Tensor(Shape{2, 0}))),
                  ParameterError);
}

TEST_CASE("conv1d is causal") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({2, 7, 3}, rng);
  Tensor kernel = random_tensor({3, 4}, rng);
  Tape tape;
  const Tensor base = ops::conv1d_causal_depthwise(tape.constant(x), tape.constant(kernel)).value();
  for (std::size_t t = 0; t < 7; ++t) {
    Tensor xp = x;
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t c = 0; c < 3; ++c) xp.mutable_data()[(i * 7 + t) * 3 + c] += 0.7;
    }
    const Tensor y = ops::conv1d_causal_depthwise(tape.constant(xp), tape.constant(kernel)).value();
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t s = 0; s < t; ++s) {
        for (std::size_t c = 0; c < 3; ++c) CHECK(y[(i * 7 + s) * 3 + c] == base[(i * 7 + s) * 3 + c]);
      }
    }
  }
}

TEST_CASE("activations: closed forms") {
  CHECK(silu(0.0) == 0.0);
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(silu(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-14));
}

TEST_CASE("softplus: positive and asymptotically max(x,0)") {
  for (double x : {-50.0, -31.0, -5.0, 0.0, 5.0, 31.0, 50.0}) CHECK(softplus(x) > 0.0);
  CHECK(std::abs(softplus(50.0) - 50.0) < 1e-12);
  CHECK(std::abs(softplus(-50.0) - 0.0) < 1e-12);
  CHECK(std::isfinite(softplus(800.0)));
}

TEST_CASE("backward: constant loss leaves zero gradients") {
  Tape tape;
  Var x = tape.leaf(Tensor::of({2}, {1, 2}));
  Var c = tape.constant(Tensor::scalar(3.0));
  tape.backward(c);
  const Tensor g = tape.grad(x);
  CHECK(g.shape() == Shape{2});
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("backward: sum gives all-ones") {
  Tape tape;
  Var x = tape.leaf(Tensor(Shape{3, 2}, 0.4));
  tape.backward(ops::sum(x));
  const Tensor g1 = tape.grad(x);
  for (double v : g1.data()) CHECK(v == 1.0);
}

TEST_CASE("backward: error paths") {
  Tape a, b;
  Var x = a.leaf(Tensor(Shape{2}));
  Var loss_b = b.leaf(Tensor::scalar(1.0));
  CHECK_THROWS_AS(a.backward(loss_b), UsageError);
  CHECK_THROWS_AS(a.backward(x), DimensionError);
}

TEST_CASE("backward: sum(silu(XW)) matches central differences") {
  std::mt19937_64 rng(6);
  const std::vector<Tensor> inputs = {random_tensor({3, 3}, rng), random_tensor({3, 3}, rng)};
  const double err = grad_check(
      [](Tape&, std::span<const Var> v) { return ops::sum(ops::silu(ops::linear(v[0], v[1]))); }, inputs, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check: sum of squares and constants") {
  std::mt19937_64 rng(7);
  const double err = grad_check([](Tape&, std::span<const Var> v) { return ops::sum(ops::mul(v[0], v[0])); },
                                {random_tensor({5}, rng)});
  CHECK(err < 1e-8);
  const double zero = grad_check([](Tape& t, std::span<const Var>) { return t.constant(Tensor::scalar(2.0)); },
                                 {random_tensor({3}, rng)});
  CHECK(zero == 0.0);
  CHECK_THROWS_AS(grad_check([](Tape&, std::span<const Var> v) { return v[0]; }, {random_tensor({3}, rng)}),
                  UsageError);
  CHECK_THROWS_AS(grad_check([](Tape&, std::span<const Var> v) { return ops::sum(v[0]); }, {Tensor(Shape{1})}, 0.0),
                  ParameterError);
}

TEST_CASE("grad_check: every differentiable op") {
  std::mt19937_64 rng(8);
  auto check_op = [&](const char* name, const std::vector<Tensor>& inputs, auto&& fn, double tol) {
    CAPTURE(name);
    const double err = grad_check(
        [&](Tape& tape, std::span<const Var> v) { return project(tape, fn(v), 99); }, inputs, 1e-5);
    CHECK(err < tol);
  };
  const Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
  check_op("add", {a, b}, [](std::span<const Var> v) { return ops::add(v[0], v[1]); }, 1e-6);
  check_op("mul", {a, b}, [](std::span<const Var> v) { return ops::mul(v[0], v[1]); }, 1e-6);
  check_op("scale", {a}, [](std::span<const Var> v) { return ops::scale(v[0], -1.7); }, 1e-6);
  check_op("linear", {a, random_tensor({4, 5}, rng), random_tensor({5}, rng)},
           [](std::span<const Var> v) { return ops::linear(v[0], v[1], v[2]); }, 1e-6);
  check_op("silu", {a}, [](std::span<const Var> v) { return ops::silu(v[0]); }, 1e-4);
  check_op("softplus", {random_tensor({2, 3, 4}, rng, -3, 3)},
           [](std::span<const Var> v) { return ops::softplus(v[0]); }, 1e-4);
  check_op("neg_exp", {a}, [](std::span<const Var> v) { return ops::neg_exp(v[0]); }, 1e-4);
  check_op("slice_last", {a}, [](std::span<const Var> v) { return ops::slice_last(v[0], 1, 3); }, 1e-6);
  check_op("conv1d", {random_tensor({2, 6, 3}, rng), random_tensor({3, 4}, rng)},
           [](std::span<const Var> v) { return ops::conv1d_causal_depthwise(v[0], v[1]); }, 1e-6);
  check_op("rms_norm", {a, random_tensor({4}, rng)},
           [](std::span<const Var> v) { return ops::rms_norm(v[0], v.subspan(1, 1)); }, 1e-4);
  static const int groups[] = {0, 1, 1, 0, 1, 0};
  check_op("rms_norm routed", {a, random_tensor({4}, rng), random_tensor({4}, rng)},
           [](std::span<const Var> v) { return ops::rms_norm(v[0], v.subspan(1, 2), groups); }, 1e-4);
  check_op("gated_residual", {a, b, random_tensor({2, 3, 4}, rng)},
           [](std::span<const Var> v) { return ops::gated_residual(v[0], v[1], v[2]); }, 1e-4);
  static const std::size_t rows[] = {4, 0, 4, 2};
  check_op("gather_rows", {a}, [](std::span<const Var> v) { return ops::gather_rows(v[0], rows); }, 1e-6);
  static const std::size_t dest[] = {5, 1, 3};
  check_op("scatter_rows", {random_tensor({3, 4}, rng)},
           [](std::span<const Var> v) { return ops::scatter_rows(v[0], dest, 6); }, 1e-6);
  static const int ids[] = {2, 0, 2, 1};
  check_op("embedding", {random_tensor({3, 4}, rng)},
           [](std::span<const Var> v) { return ops::embedding(v[0], ids); }, 1e-6);
  static const int targets[] = {1, -1, 4};
  const double ce = grad_check(
      [](Tape&, std::span<const Var> v) { return ops::cross_entropy_sum(v[0], targets); }, {random_tensor({3, 5}, rng)});
  CHECK(ce < 1e-4);
  const double ms = grad_check([](Tape&, std::span<const Var> v) { return ops::mse(v[0], v[1]); }, {a, b});
  CHECK(ms < 1e-6);
  const double ws = grad_check(
      [](Tape&, std::span<const Var> v) {
        const Var terms[] = {ops::sum(v[0]), ops::sum(v[1])};
        const double coeffs[] = {2.0, -0.5};
        return ops::weighted_sum(terms, coeffs);
      },
      {a, b});
  CHECK(ws < 1e-6);
}

TEST_CASE("embedding rejects out-of-vocabulary ids") {
  Tape tape;
  static const int ids[] = {0, 3};
  CHECK_THROWS_AS(ops::embedding(tape.constant(Tensor(Shape{3, 2})), ids), ValidationError);
}
