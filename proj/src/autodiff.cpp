#include "mom/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "mom/errors.hpp"

namespace mom {

namespace {

// Every step allocates and frees the same multi-megabyte activations. Keeping
// freed blocks in the heap instead of returning them to the kernel avoids a
// page-fault storm on each fresh allocation.
void retain_freed_blocks() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

}  // namespace

Tape::Tape() { retain_freed_blocks(); }

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("var: unbound variable");
  return tape_->value(id_);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), nullptr, requires_grad, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& in : inputs) {
    check_owned(in, "record");
    needs = needs || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), needs ? std::move(backward) : nullptr, needs, {}});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v, const char* what) const {
  if (v.tape_ != this || v.id() >= nodes_.size()) {
    throw UsageError(std::string(what) + ": variable is not recorded on this tape");
  }
}

double* Tape::grad_ptr(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad.data();
}

void Tape::backward(const Var& loss) {
  check_owned(loss, "backward");
  const Node& root = nodes_[loss.id()];
  if (root.value.size() != 1) {
    throw DimensionError("backward: loss must be a scalar, got shape " + shape_string(root.value.shape()));
  }
  for (Node& node : nodes_) node.grad.clear();
  if (!root.requires_grad) return;
  grad_ptr(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    // The closure may grow other nodes' buffers but never this one.
    node.backward(*this, std::span<const double>(node.grad));
  }
}

Tensor Tape::grad(const Var& v) const {
  check_owned(v, "grad");
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor::zeros(node.value.shape());
  return Tensor(node.value.shape(), node.grad);
}

bool Tape::requires_grad(const Var& v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id()].requires_grad;
}

double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps) {
  if (!(eps > 0.0)) throw ParameterError("grad_check: eps must be positive");

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const Tensor& x : xs) vars.push_back(tape.leaf(x, false));
    Var out = f(tape, vars);
    if (out.value().size() != 1) throw UsageError("grad_check: function is not scalar-valued");
    return out.value()[0];
  };

  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& x : inputs) vars.push_back(tape.leaf(x, true));
  Var out = f(tape, vars);
  if (out.value().size() != 1) throw UsageError("grad_check: function is not scalar-valued");
  tape.backward(out);

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const Tensor analytic = tape.grad(vars[a]);
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double x0 = inputs[a][i];
      probe[a] = inputs[a];
      probe[a].mutable_data()[i] = x0 + eps;
      const double plus = evaluate(probe);
      probe[a].mutable_data()[i] = x0 - eps;
      const double minus = evaluate(probe);
      const double central = (plus - minus) / (2.0 * eps);
      const double g = analytic[i];
      worst = std::max(worst, std::abs(g - central) / (std::abs(g) + std::abs(central) + 1e-12));
    }
    probe[a] = inputs[a];
  }
  return worst;
}

}  // namespace mom
