#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mom/tensor.hpp"

namespace mom {

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode gradient tape. Nodes are appended in execution order, so the
// record is topologically sorted by construction. Forward activations needed
// by a node's backward are captured in its closure.
//
// Single-writer: one tape per training step, never shared across threads.
class Tape {
 public:
  // Receives the adjoint of the node's output and accumulates into inputs
  // through Tape::grad_ptr.
  using BackwardFn = std::function<void(Tape&, std::span<const double> grad_out)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records an op output. `backward` is dropped when no input requires grad.
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and propagates in reverse record order.
  void backward(const Var& loss);

  // Gradient after backward; zeros of the value's shape when nothing flowed.
  Tensor grad(const Var& v) const;

  bool requires_grad(const Var& v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }

  // Adjoint buffer of node `id`, allocated zeroed on first use; nullptr when
  // the node does not require grad.
  double* grad_ptr(std::size_t id);
  double* grad_ptr(const Var& v) { return grad_ptr(v.id()); }

 private:
  struct Node {
    Tensor value;
    BackwardFn backward;
    bool requires_grad = false;
    std::vector<double> grad;
  };

  void check_owned(const Var& v, const char* what) const;

  std::vector<Node> nodes_;
};

// A scalar-valued function of tape variables.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Max over every input entry of |analytic - central| / (|analytic| + |central| + 1e-12),
// with central differences of step eps.
double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace mom
