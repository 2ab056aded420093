#include "mom/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kernels.hpp"
#include "mom/errors.hpp"
#include "mom/flop_counter.hpp"

namespace mom {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace ops {
namespace {

Shape with_last(Shape shape, std::size_t last) {
  if (shape.empty()) return {last};
  shape.back() = last;
  return shape;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": operand shapes differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank(const Var& a, std::size_t rank, const char* op, const char* name) {
  if (a.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_string(a.shape()));
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data(), y = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b](Tape& tape, std::span<const double> g) {
    for (const Var& v : {a, b}) {
      if (double* d = tape.grad_ptr(v)) {
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      }
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  const Tensor av = a.value(), bv = b.value();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] * bv[i];
  const Var inputs[] = {a, b};
  return a.tape().record(std::move(out), inputs, [a, b, av, bv](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (double* d = tape.grad_ptr(b)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  auto x = a.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  const Var inputs[] = {a};
  return a.tape().record(std::move(out), inputs, [a, factor](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(a)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
    }
  });
}

Var sum(const Var& a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const Var inputs[] = {a};
  return a.tape().record(Tensor::scalar(total), inputs, [a](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(a)) {
      const std::size_t n = a.value().size();
      for (std::size_t i = 0; i < n; ++i) d[i] += g[0];
    }
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> coeffs) {
  if (terms.empty() || terms.size() != coeffs.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(terms.size()) + " terms vs " +
                         std::to_string(coeffs.size()) + " coefficients");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1) throw DimensionError("weighted_sum: term " + std::to_string(i) + " is not scalar");
    total += coeffs[i] * terms[i].value()[0];
  }
  std::vector<Var> ts(terms.begin(), terms.end());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return terms[0].tape().record(Tensor::scalar(total), ts, [ts, cs](Tape& tape, std::span<const double> g) {
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (double* d = tape.grad_ptr(ts[i])) d[0] += g[0] * cs[i];
    }
  });
}

Var activation(const Var& x, Activation which) {
  const Tensor xv = x.value();
  Tensor out(xv.shape());
  auto o = out.mutable_data();
  if (which == Activation::silu) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = mom::silu(xv[i]);
  } else {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = mom::softplus(xv[i]);
  }
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x, xv, which](Tape& tape, std::span<const double> g) {
    double* d = tape.grad_ptr(x);
    if (!d) return;
    if (which == Activation::silu) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = sigmoid(xv[i]);
        d[i] += g[i] * s * (1.0 + xv[i] * (1.0 - s));
      }
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * sigmoid(xv[i]);
    }
  });
}

Var neg_exp(const Var& x) {
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto xv = x.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = -std::exp(xv[i]);
  Tensor saved = out;
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x, saved](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * saved[i];
    }
  });
}

Var linear(const Var& x, const Var& w, const std::optional<Var>& bias) {
  require_rank(w, 2, "linear", "W");
  if (x.shape().empty()) throw DimensionError("linear: X must have at least one axis");
  const std::size_t fin = x.shape().back();
  if (fin != w.shape()[0]) {
    throw DimensionError("linear: X trailing axis (f_in=" + std::to_string(fin) + ") does not match W axis 0 (" +
                         std::to_string(w.shape()[0]) + ")");
  }
  const std::size_t fout = w.shape()[1];
  if (bias && bias->shape() != Shape{fout}) {
    throw DimensionError("linear: bias shape " + shape_string(bias->shape()) + " does not match W axis 1 (f_out=" +
                         std::to_string(fout) + ")");
  }
  const Tensor xv = x.value(), wv = w.value();
  const std::size_t n = xv.rows();
  Tensor out(with_last(xv.shape(), fout));
  kernels::gemm(xv.data().data(), n, fin, wv.data().data(), fout, bias ? bias->value().data().data() : nullptr,
                out.mutable_data().data());
  std::vector<Var> inputs = {x, w};
  if (bias) inputs.push_back(*bias);
  return x.tape().record(std::move(out), inputs,
                         [x, w, bias, xv, wv, n, fin, fout](Tape& tape, std::span<const double> g) {
                           if (double* dx = tape.grad_ptr(x)) {
                             kernels::gemm_grad_input(g.data(), n, fout, wv.data().data(), fin, dx);
                           }
                           double* dw = tape.grad_ptr(w);
                           double* db = bias ? tape.grad_ptr(*bias) : nullptr;
                           if (dw) {
                             kernels::gemm_grad_weight(xv.data().data(), g.data(), n, fin, fout, dw, db);
                           } else if (db) {
                             for (std::size_t r = 0; r < n; ++r) {
                               for (std::size_t j = 0; j < fout; ++j) db[j] += g[r * fout + j];
                             }
                           }
                         });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x](Tape& tape, std::span<const double> g) {
    if (double* dx = tape.grad_ptr(x)) {
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    }
  });
}

Var slice_last(const Var& x, std::size_t begin, std::size_t end) {
  if (x.shape().empty() || begin > end || end > x.shape().back()) {
    throw DimensionError("slice_last: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_string(x.shape()));
  }
  const std::size_t cols = x.shape().back(), width = end - begin;
  const std::size_t n = x.value().rows();
  Tensor out(with_last(x.shape(), width));
  auto o = out.mutable_data();
  auto xv = x.value().data();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(xv.data() + r * cols + begin, width, o.data() + r * width);
  }
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x, n, cols, begin, width](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(x)) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < width; ++j) d[r * cols + begin + j] += g[r * width + j];
      }
    }
  });
}

Var conv1d_causal_depthwise(const Var& x, const Var& kernel) {
  require_rank(x, 3, "conv1d_causal_depthwise", "x");
  require_rank(kernel, 2, "conv1d_causal_depthwise", "kernel");
  const std::size_t b = x.shape()[0], len = x.shape()[1], d = x.shape()[2];
  const std::size_t k = kernel.shape()[1];
  if (k == 0) throw ParameterError("conv1d_causal_depthwise: kernel width must be >= 1");
  if (kernel.shape()[0] != d) {
    throw DimensionError("conv1d_causal_depthwise: kernel axis 0 (" + std::to_string(kernel.shape()[0]) +
                         ") does not match x channel axis 2 (d=" + std::to_string(d) + ")");
  }
  const Tensor xv = x.value(), kv = kernel.value();
  Tensor out(xv.shape());
  auto o = out.mutable_data();
  flops::tally(2ULL * b * len * d * k);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t t = 0; t < len; ++t) {
      double* ot = o.data() + (i * len + t) * d;
      for (std::size_t j = 0; j < k; ++j) {
        // source position t - k + 1 + j; taps before the sequence start read zeros.
        if (t + 1 + j < k) continue;
        const std::size_t s = t + 1 + j - k;
        const double* xs = xv.data().data() + (i * len + s) * d;
        for (std::size_t c = 0; c < d; ++c) ot[c] += kv[c * k + j] * xs[c];
      }
    }
  }
  const Var inputs[] = {x, kernel};
  return x.tape().record(std::move(out), inputs,
                         [x, kernel, xv, kv, b, len, d, k](Tape& tape, std::span<const double> g) {
                           double* dx = tape.grad_ptr(x);
                           double* dk = tape.grad_ptr(kernel);
                           for (std::size_t i = 0; i < b; ++i) {
                             for (std::size_t t = 0; t < len; ++t) {
                               const double* gt = g.data() + (i * len + t) * d;
                               for (std::size_t j = 0; j < k; ++j) {
                                 if (t + 1 + j < k) continue;
                                 const std::size_t s = t + 1 + j - k;
                                 if (dx) {
                                   double* dxs = dx + (i * len + s) * d;
                                   for (std::size_t c = 0; c < d; ++c) dxs[c] += kv[c * k + j] * gt[c];
                                 }
                                 if (dk) {
                                   const double* xs = xv.data().data() + (i * len + s) * d;
                                   for (std::size_t c = 0; c < d; ++c) dk[c * k + j] += xs[c] * gt[c];
                                 }
                               }
                             }
                           }
                         });
}

Var rms_norm(const Var& x, std::span<const Var> gains, std::span<const int> row_groups, double eps) {
  if (gains.empty()) throw DimensionError("rms_norm: no gain vectors");
  const std::size_t f = x.shape().empty() ? 1 : x.shape().back();
  for (const Var& gvar : gains) {
    if (gvar.shape() != Shape{f}) {
      throw DimensionError("rms_norm: gain shape " + shape_string(gvar.shape()) + " does not match feature axis (f=" +
                           std::to_string(f) + ")");
    }
  }
  const Tensor xv = x.value();
  const std::size_t n = xv.rows();
  if (gains.size() > 1 && row_groups.size() != n) {
    throw DimensionError("rms_norm: " + std::to_string(row_groups.size()) + " row groups for " + std::to_string(n) +
                         " rows");
  }
  std::vector<int> groups(row_groups.begin(), row_groups.end());
  std::vector<Tensor> gv;
  for (const Var& gvar : gains) gv.push_back(gvar.value());
  std::vector<double> inv_rms(n);
  Tensor out(xv.shape());
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = xv.data().data() + r * f;
    double ss = 0.0;
    for (std::size_t j = 0; j < f; ++j) ss += xr[j] * xr[j];
    inv_rms[r] = 1.0 / std::sqrt(ss / static_cast<double>(f) + eps);
    const Tensor& gr = gv[gains.size() > 1 ? static_cast<std::size_t>(groups[r]) : 0];
    for (std::size_t j = 0; j < f; ++j) o[r * f + j] = xr[j] * inv_rms[r] * gr[j];
  }
  std::vector<Var> inputs = {x};
  inputs.insert(inputs.end(), gains.begin(), gains.end());
  std::vector<Var> gvars(gains.begin(), gains.end());
  return x.tape().record(
      std::move(out), inputs, [x, gvars, gv, groups, xv, inv_rms, n, f](Tape& tape, std::span<const double> g) {
        double* dx = tape.grad_ptr(x);
        for (std::size_t r = 0; r < n; ++r) {
          const std::size_t which = gvars.size() > 1 ? static_cast<std::size_t>(groups[r]) : 0;
          const Tensor& gr = gv[which];
          const double* xr = xv.data().data() + r * f;
          const double* gout = g.data() + r * f;
          const double ir = inv_rms[r];
          if (double* dg = tape.grad_ptr(gvars[which])) {
            for (std::size_t j = 0; j < f; ++j) dg[j] += gout[j] * xr[j] * ir;
          }
          if (dx) {
            double dot = 0.0;
            for (std::size_t j = 0; j < f; ++j) dot += gout[j] * gr[j] * xr[j];
            const double coef = ir * ir * ir * dot / static_cast<double>(f);
            double* dxr = dx + r * f;
            for (std::size_t j = 0; j < f; ++j) dxr[j] += ir * gr[j] * gout[j] - coef * xr[j];
          }
        }
      });
}

Var gated_residual(const Var& y, const Var& u, const Var& z) {
  require_same_shape(y, u, "gated_residual");
  require_same_shape(y, z, "gated_residual");
  const Tensor yv = y.value(), uv = u.value(), zv = z.value();
  Tensor out(yv.shape());
  auto o = out.mutable_data();
  flops::tally(2ULL * o.size());
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (yv[i] + uv[i]) * mom::silu(zv[i]);
  const Var inputs[] = {y, u, z};
  return y.tape().record(std::move(out), inputs, [y, u, z, yv, uv, zv](Tape& tape, std::span<const double> g) {
    double* dy = tape.grad_ptr(y);
    double* du = tape.grad_ptr(u);
    double* dz = tape.grad_ptr(z);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid(zv[i]);
      const double gate = zv[i] * s;
      if (dy) dy[i] += g[i] * gate;
      if (du) du[i] += g[i] * gate;
      if (dz) dz[i] += g[i] * (yv[i] + uv[i]) * s * (1.0 + zv[i] * (1.0 - s));
    }
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  const std::size_t cols = x.value().cols(), total = x.value().rows();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor out(Shape{idx.size(), cols});
  auto o = out.mutable_data();
  auto xv = x.value().data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= total) throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " out of range");
    std::copy_n(xv.data() + idx[i] * cols, cols, o.data() + i * cols);
  }
  const Var inputs[] = {x};
  return x.tape().record(std::move(out), inputs, [x, idx, cols](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(x)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) d[idx[i] * cols + j] += g[i * cols + j];
      }
    }
  });
}

Var scatter_rows(const Var& src, std::span<const std::size_t> rows, std::size_t total_rows) {
  const std::size_t cols = src.value().cols();
  if (src.value().rows() != rows.size()) {
    throw DimensionError("scatter_rows: " + std::to_string(src.value().rows()) + " source rows for " +
                         std::to_string(rows.size()) + " destinations");
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Tensor out(Shape{total_rows, cols});
  auto o = out.mutable_data();
  auto sv = src.value().data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= total_rows) throw DimensionError("scatter_rows: row " + std::to_string(idx[i]) + " out of range");
    std::copy_n(sv.data() + i * cols, cols, o.data() + idx[i] * cols);
  }
  const Var inputs[] = {src};
  return src.tape().record(std::move(out), inputs, [src, idx, cols](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(src)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) d[i * cols + j] += g[idx[i] * cols + j];
      }
    }
  });
}

Var embedding(const Var& table, std::span<const int> ids) {
  require_rank(table, 2, "embedding", "table");
  const std::size_t vocab = table.shape()[0], f = table.shape()[1];
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor out(Shape{idv.size(), f});
  auto o = out.mutable_data();
  auto tv = table.value().data();
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
      throw ValidationError("embedding: id " + std::to_string(idv[i]) + " at row " + std::to_string(i) +
                            " outside vocabulary of " + std::to_string(vocab));
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(idv[i]) * f, f, o.data() + i * f);
  }
  const Var inputs[] = {table};
  return table.tape().record(std::move(out), inputs, [table, idv, f](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(table)) {
      for (std::size_t i = 0; i < idv.size(); ++i) {
        double* dr = d + static_cast<std::size_t>(idv[i]) * f;
        for (std::size_t j = 0; j < f; ++j) dr[j] += g[i * f + j];
      }
    }
  });
}

Var cross_entropy_sum(const Var& logits, std::span<const int> targets) {
  require_rank(logits, 2, "cross_entropy_sum", "logits");
  const std::size_t n = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != n) {
    throw DimensionError("cross_entropy_sum: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) +
                         " rows");
  }
  std::vector<int> tg(targets.begin(), targets.end());
  const Tensor lv = logits.value();
  // Softmax probabilities are kept for the backward pass.
  Tensor probs(lv.shape());
  auto p = probs.mutable_data();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* lr = lv.data().data() + r * v;
    const double mx = *std::max_element(lr, lr + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(lr[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < v; ++j) p[r * v + j] = std::exp(lr[j] - log_z);
    if (tg[r] < 0) continue;
    if (static_cast<std::size_t>(tg[r]) >= v) {
      throw ValidationError("cross_entropy_sum: target " + std::to_string(tg[r]) + " at row " + std::to_string(r) +
                            " outside vocabulary of " + std::to_string(v));
    }
    total += log_z - lr[tg[r]];
  }
  const Var inputs[] = {logits};
  return logits.tape().record(Tensor::scalar(total), inputs, [logits, tg, probs, v](Tape& tape, std::span<const double> g) {
    double* d = tape.grad_ptr(logits);
    if (!d) return;
    for (std::size_t r = 0; r < tg.size(); ++r) {
      if (tg[r] < 0) continue;
      for (std::size_t j = 0; j < v; ++j) d[r * v + j] += g[0] * probs[r * v + j];
      d[r * v + static_cast<std::size_t>(tg[r])] -= g[0];
    }
  });
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const std::size_t n = a.value().size();
  if (n == 0) throw DimensionError("mse: empty operands");
  std::vector<double> diff(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = a.value()[i] - b.value()[i];
    total += diff[i] * diff[i];
  }
  const double inv = 1.0 / static_cast<double>(n);
  const Var inputs[] = {a, b};
  return a.tape().record(Tensor::scalar(total * inv), inputs, [a, b, diff, inv](Tape& tape, std::span<const double> g) {
    if (double* d = tape.grad_ptr(a)) {
      for (std::size_t i = 0; i < diff.size(); ++i) d[i] += g[0] * 2.0 * diff[i] * inv;
    }
    if (double* d = tape.grad_ptr(b)) {
      for (std::size_t i = 0; i < diff.size(); ++i) d[i] -= g[0] * 2.0 * diff[i] * inv;
    }
  });
}

}  // namespace ops
}  // namespace mom
