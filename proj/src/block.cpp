#include "mom/block.hpp"

#include <cmath>
#include <string>

#include "mom/errors.hpp"
#include "mom/flop_counter.hpp"
#include "mom/ops.hpp"
#include "kernels.hpp"

namespace mom {

BlockDims BlockDims::defaults(std::size_t f) {
  BlockDims dims;
  dims.f = f;
  dims.d = 2 * f;
  dims.r = (f + 15) / 16;
  return dims;
}

void BlockDims::validate() const {
  if (f == 0) throw ConfigError("model.f", "must be positive");
  if (d == 0) throw ConfigError("model.d", "must be positive");
  if (n == 0) throw ConfigError("model.n", "must be positive");
  if (r == 0) throw ConfigError("model.r", "must be positive");
  if (k == 0) throw ConfigError("model.k", "must be positive");
  if (r > d) throw ConfigError("model.r", "dt rank " + std::to_string(r) + " exceeds d=" + std::to_string(d));
}

SparsityConfig SparsityConfig::from_bits(unsigned bits) {
  return {(bits & 1u) != 0, (bits & 2u) != 0, (bits & 4u) != 0, (bits & 8u) != 0};
}

unsigned SparsityConfig::bits() const noexcept {
  return (in_proj ? 1u : 0u) | (x_proj ? 2u : 0u) | (dt_proj ? 4u : 0u) | (out_proj ? 8u : 0u);
}

std::string SparsityConfig::name() const {
  static constexpr const char* names[] = {"in_proj", "x_proj", "dt_proj", "out_proj"};
  std::string out;
  for (unsigned i = 0; i < 4; ++i) {
    if (bits() & (1u << i)) out += (out.empty() ? "" : "+") + std::string(names[i]);
  }
  return out.empty() ? "none" : out;
}

std::string SparsityConfig::label() const {
  static constexpr const char* digits[] = {"①", "②", "③", "④"};
  std::string out;
  for (unsigned i = 0; i < 4; ++i) {
    if (bits() & (1u << i)) out += (out.empty() ? "" : "+") + std::string(digits[i]);
  }
  return out.empty() ? "none" : out;
}

std::array<SparsityConfig, 16> enumerate_sparsity_configs() {
  // Dense, singles, pairs, triples, all four; within a size, lexicographic in (1,2,3,4).
  static constexpr unsigned order[16] = {0b0000, 0b0001, 0b0010, 0b0100, 0b1000, 0b0011, 0b0101, 0b1001,
                                         0b0110, 0b1010, 0b1100, 0b0111, 0b1011, 0b1101, 0b1110, 0b1111};
  std::array<SparsityConfig, 16> out;
  for (std::size_t i = 0; i < 16; ++i) out[i] = SparsityConfig::from_bits(order[i]);
  return out;
}

Tensor MoMBlockParams::state_matrix() const {
  Tensor a(a_log.shape());
  auto ad = a.mutable_data();
  for (std::size_t i = 0; i < ad.size(); ++i) ad[i] = -std::exp(a_log[i]);
  return a;
}

namespace {

void check_routed(const RoutedWeights& w, const char* name, bool decoupled, std::size_t num_modalities,
                  const Shape& shape, bool bias) {
  w.validate();
  const std::size_t want = decoupled ? num_modalities : 1;
  if (w.weights.size() != want) {
    throw DimensionError(std::string(name) + ": expected " + std::to_string(want) + " weight tensors, got " +
                         std::to_string(w.weights.size()));
  }
  if (w.weights[0].shape() != shape) {
    throw DimensionError(std::string(name) + ": weight shape " + shape_string(w.weights[0].shape()) + ", expected " +
                         shape_string(shape));
  }
  if (bias && w.biases.empty()) throw DimensionError(std::string(name) + ": missing bias");
}

}  // namespace

void MoMBlockParams::validate(const BlockDims& dims, const SparsityConfig& cfg, std::size_t num_modalities) const {
  dims.validate();
  check_routed(in_proj, "in_proj", cfg.in_proj, num_modalities, {dims.f, 2 * dims.d}, false);
  check_routed(x_proj, "x_proj", cfg.x_proj, num_modalities, {dims.d, dims.x_proj_out()}, false);
  check_routed(dt_proj, "dt_proj", cfg.dt_proj, num_modalities, {dims.r, dims.d}, true);
  check_routed(out_proj, "out_proj", cfg.out_proj, num_modalities, {dims.d, dims.f}, false);
  if (conv_kernel.shape() != Shape{dims.d, dims.k}) {
    throw DimensionError("conv_kernel: shape " + shape_string(conv_kernel.shape()) + ", expected " +
                         shape_string({dims.d, dims.k}));
  }
  if (a_log.shape() != Shape{dims.d, dims.n}) {
    throw DimensionError("A: shape " + shape_string(a_log.shape()) + ", expected " + shape_string({dims.d, dims.n}));
  }
}

BlockDims infer_dims(const MoMBlockParams& params) {
  BlockDims dims;
  dims.f = params.in_proj.in_features();
  dims.d = params.in_proj.out_features() / 2;
  dims.r = params.dt_proj.in_features();
  dims.n = params.a_log.dim(1);
  dims.k = params.conv_kernel.dim(1);
  return dims;
}

MoMBlockParams init_block_params(const BlockDims& dims, const SparsityConfig& cfg, std::size_t num_modalities,
                                 std::mt19937_64& rng) {
  dims.validate();
  std::normal_distribution<double> normal(0.0, 0.02);
  auto normal_tensor = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_data()) v = normal(rng);
    return t;
  };
  auto uniform_tensor = [&](Shape shape, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Tensor t(std::move(shape));
    for (double& v : t.mutable_data()) v = u(rng);
    return t;
  };
  auto copies = [&](bool decoupled) { return decoupled ? num_modalities : std::size_t{1}; };

  MoMBlockParams p;
  p.in_proj = RoutedWeights::replicated(normal_tensor({dims.f, 2 * dims.d}), copies(cfg.in_proj));
  p.conv_kernel = uniform_tensor({dims.d, dims.k}, 1.0 / std::sqrt(static_cast<double>(dims.k)));
  p.x_proj = RoutedWeights::replicated(normal_tensor({dims.d, dims.x_proj_out()}), copies(cfg.x_proj));

  const Tensor dt_w = uniform_tensor({dims.r, dims.d}, 1.0 / std::sqrt(static_cast<double>(dims.r)));
  // softplus(bias) log-uniform in [1e-3, 1e-1].
  Tensor dt_b(Shape{dims.d});
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  for (double& v : dt_b.mutable_data()) {
    const double dt = std::exp(log_dt(rng));
    v = dt + std::log(-std::expm1(-dt));
  }
  p.dt_proj = RoutedWeights::replicated(dt_w, copies(cfg.dt_proj), &dt_b);
  p.out_proj = RoutedWeights::replicated(normal_tensor({dims.d, dims.f}), copies(cfg.out_proj));

  p.a_log = Tensor(Shape{dims.d, dims.n});
  auto ad = p.a_log.mutable_data();
  for (std::size_t c = 0; c < dims.d; ++c) {
    for (std::size_t s = 0; s < dims.n; ++s) ad[c * dims.n + s] = std::log(static_cast<double>(s + 1));
  }
  return p;
}

BlockVars bind_block(Tape& tape, const MoMBlockParams& params, bool requires_grad) {
  auto bind = [&](const RoutedWeights& w) {
    RoutedVars v;
    for (const Tensor& t : w.weights) v.weights.push_back(tape.leaf(t, requires_grad));
    for (const Tensor& t : w.biases) v.biases.push_back(tape.leaf(t, requires_grad));
    return v;
  };
  BlockVars out;
  out.in_proj = bind(params.in_proj);
  out.x_proj = bind(params.x_proj);
  out.dt_proj = bind(params.dt_proj);
  out.out_proj = bind(params.out_proj);
  out.conv_kernel = tape.leaf(params.conv_kernel, requires_grad);
  out.a_log = tape.leaf(params.a_log, requires_grad);
  return out;
}

Var discretize_a(const Var& delta, const Var& a, Discretization mode) {
  if (delta.shape().size() != 3 || a.shape().size() != 2 || a.shape()[0] != delta.shape()[2]) {
    throw DimensionError("discretize: delta " + shape_string(delta.shape()) + " and A " + shape_string(a.shape()) +
                         " disagree on d");
  }
  const std::size_t rows = delta.value().rows(), d = a.shape()[0], n = a.shape()[1];
  const Tensor dv = delta.value(), av = a.value();
  Tensor out(Shape{delta.shape()[0], delta.shape()[1], d, n});
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double dt = dv[r * d + c];
      double* orow = o.data() + (r * d + c) * n;
      const double* arow = av.data().data() + c * n;
      for (std::size_t s = 0; s < n; ++s) orow[s] = dt * arow[s];
    }
  }
  if (mode == Discretization::zoh_exp) kernels::exp_inplace(o.data(), o.size());
  Tensor saved = out;
  const Var inputs[] = {delta, a};
  return delta.tape().record(
      std::move(out), inputs, [delta, a, dv, av, saved, rows, d, n, mode](Tape& tape, std::span<const double> g) {
        double* dd = tape.grad_ptr(delta);
        double* da = tape.grad_ptr(a);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < d; ++c) {
            const std::size_t off = (r * d + c) * n;
            const double dt = dv[r * d + c];
            double acc = 0.0;
            for (std::size_t s = 0; s < n; ++s) {
              // d(a_bar)/d(delta*A): 1 (literal) or a_bar itself (zoh_exp)
              const double gs = mode == Discretization::zoh_exp ? g[off + s] * saved[off + s] : g[off + s];
              acc += gs * av[c * n + s];
              if (da) da[c * n + s] += gs * dt;
            }
            if (dd) dd[r * d + c] += acc;
          }
        }
      });
}

Var discretize_b(const Var& delta, const Var& u, const Var& b) {
  if (delta.shape() != u.shape() || delta.shape().size() != 3 || b.shape().size() != 3 ||
      b.shape()[0] != u.shape()[0] || b.shape()[1] != u.shape()[1]) {
    throw DimensionError("discretize: delta " + shape_string(delta.shape()) + ", u " + shape_string(u.shape()) +
                         ", B " + shape_string(b.shape()) + " are inconsistent");
  }
  const std::size_t rows = u.value().rows(), d = u.shape()[2], n = b.shape()[2];
  const Tensor dv = delta.value(), uv = u.value(), bv = b.value();
  Tensor out(Shape{u.shape()[0], u.shape()[1], d, n});
  auto o = out.mutable_data();
  flops::tally(2ULL * rows * d * n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* br = bv.data().data() + r * n;
    for (std::size_t c = 0; c < d; ++c) {
      const double du = dv[r * d + c] * uv[r * d + c];
      double* orow = o.data() + (r * d + c) * n;
      for (std::size_t s = 0; s < n; ++s) orow[s] = du * br[s];
    }
  }
  const Var inputs[] = {delta, u, b};
  return delta.tape().record(
      std::move(out), inputs, [delta, u, b, dv, uv, bv, rows, d, n](Tape& tape, std::span<const double> g) {
        double* gd = tape.grad_ptr(delta);
        double* gu = tape.grad_ptr(u);
        double* gb = tape.grad_ptr(b);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* br = bv.data().data() + r * n;
          for (std::size_t c = 0; c < d; ++c) {
            const std::size_t off = (r * d + c) * n;
            const double dt = dv[r * d + c], uu = uv[r * d + c];
            double gdotb = 0.0;
            for (std::size_t s = 0; s < n; ++s) gdotb += g[off + s] * br[s];
            if (gd) gd[r * d + c] += gdotb * uu;
            if (gu) gu[r * d + c] += gdotb * dt;
            if (gb) {
              const double du = dt * uu;
              for (std::size_t s = 0; s < n; ++s) gb[r * n + s] += g[off + s] * du;
            }
          }
        }
      });
}

Var discretized_scan(const Var& delta, const Var& u, const Var& a, const Var& b, const Var& c, Discretization mode) {
  const Shape& ds = delta.shape();
  if (ds.size() != 3 || u.shape() != ds || a.shape().size() != 2 || a.shape()[0] != ds[2] ||
      b.shape().size() != 3 || b.shape()[0] != ds[0] || b.shape()[1] != ds[1] || b.shape()[2] != a.shape()[1] ||
      c.shape() != b.shape()) {
    throw DimensionError("discretized_scan: delta " + shape_string(ds) + ", u " + shape_string(u.shape()) + ", A " +
                         shape_string(a.shape()) + ", B " + shape_string(b.shape()) + ", C " +
                         shape_string(c.shape()) + " are inconsistent");
  }
  const std::size_t batch = ds[0], len = ds[1], d = ds[2], n = a.shape()[1], dn = d * n;
  const Tensor dv = delta.value(), uv = u.value(), av = a.value(), bv = b.value(), cv = c.value();
  flops::tally(6ULL * batch * len * dn);

  // states[t] = h_t and abar[t] per (batch, t); both [b,l,d,n].
  Tensor states(Shape{batch, len, d, n});
  Tensor abar(Shape{batch, len, d, n});
  Tensor y(Shape{batch, len, d});
  {
    double* hs = states.mutable_data().data();
    double* ab = abar.mutable_data().data();
    double* yo = y.mutable_data().data();
    const double* A = av.data().data();
    for (std::size_t i = 0; i < batch; ++i) {
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t row = i * len + t;
        double* at = ab + row * dn;
        for (std::size_t ch = 0; ch < d; ++ch) {
          const double dt = dv[row * d + ch];
          for (std::size_t s = 0; s < n; ++s) at[ch * n + s] = dt * A[ch * n + s];
        }
        if (mode == Discretization::zoh_exp) kernels::exp_inplace(at, dn);
        const double* bt = bv.data().data() + row * n;
        const double* ct = cv.data().data() + row * n;
        const double* prev = t > 0 ? hs + (row - 1) * dn : nullptr;
        double* h = hs + row * dn;
        for (std::size_t ch = 0; ch < d; ++ch) {
          const double du = dv[row * d + ch] * uv[row * d + ch];
          double acc = 0.0;
          for (std::size_t s = 0; s < n; ++s) {
            const std::size_t k = ch * n + s;
            const double hk = (prev ? prev[k] * at[k] : 0.0) + du * bt[s];
            h[k] = hk;
            acc += hk * ct[s];
          }
          yo[row * d + ch] = acc;
        }
      }
    }
  }

  const Var inputs[] = {delta, u, a, b, c};
  return delta.tape().record(
      std::move(y), inputs,
      [delta, u, a, b, c, dv, uv, av, bv, cv, states, abar, batch, len, d, n, mode](Tape& tape,
                                                                                    std::span<const double> g) {
        double* gd = tape.grad_ptr(delta);
        double* gu = tape.grad_ptr(u);
        double* ga = tape.grad_ptr(a);
        double* gb = tape.grad_ptr(b);
        double* gc = tape.grad_ptr(c);
        const std::size_t dn = d * n;
        const double* hs = states.data().data();
        const double* ab = abar.data().data();
        const double* A = av.data().data();
        std::vector<double> dh(dn);
        for (std::size_t i = 0; i < batch; ++i) {
          std::fill(dh.begin(), dh.end(), 0.0);
          for (std::size_t t = len; t-- > 0;) {
            const std::size_t row = i * len + t;
            const double* h = hs + row * dn;
            const double* prev = t > 0 ? h - dn : nullptr;
            const double* at = ab + row * dn;
            const double* bt = bv.data().data() + row * n;
            const double* ct = cv.data().data() + row * n;
            for (std::size_t ch = 0; ch < d; ++ch) {
              const double gy = g[row * d + ch];
              const double dt = dv[row * d + ch], uu = uv[row * d + ch];
              double g_delta = 0.0, gdotb = 0.0;
              for (std::size_t s = 0; s < n; ++s) {
                const std::size_t k = ch * n + s;
                const double dk = dh[k] + gy * ct[s];
                if (gc) gc[row * n + s] += gy * h[k];
                gdotb += dk * bt[s];
                if (gb) gb[row * n + s] += dk * dt * uu;
                if (prev) {
                  // d(a_bar)/d(delta*A): 1 (literal) or a_bar itself (zoh_exp)
                  const double gabar = dk * prev[k] * (mode == Discretization::zoh_exp ? at[k] : 1.0);
                  g_delta += gabar * A[k];
                  if (ga) ga[k] += gabar * dt;
                }
                dh[k] = dk * at[k];
              }
              if (gd) gd[row * d + ch] += g_delta + gdotb * uu;
              if (gu) gu[row * d + ch] += gdotb * dt;
            }
          }
        }
      });
}

Discretized discretize(const Var& u, const Var& delta_low, const Var& b, const RoutedVars& dt_proj, const Var& a,
                       const ModalityMask& mask, Discretization mode) {
  Var delta = ops::softplus(modal_linear(delta_low, dt_proj, mask));
  return {discretize_a(delta, a, mode), discretize_b(delta, u, b), delta};
}

DiscretizedTensors discretize(const Tensor& u, const Tensor& delta_low, const Tensor& b, const RoutedWeights& dt_proj,
                              const Tensor& a, const ModalityMask& mask, Discretization mode) {
  dt_proj.validate();
  Tape tape;
  RoutedVars w;
  for (const Tensor& t : dt_proj.weights) w.weights.push_back(tape.constant(t));
  for (const Tensor& t : dt_proj.biases) w.biases.push_back(tape.constant(t));
  Discretized out = discretize(tape.constant(u), tape.constant(delta_low), tape.constant(b), w, tape.constant(a), mask,
                               mode);
  return {out.a_bar.value(), out.b_bar.value(), out.delta.value()};
}

Var mom_block_forward(const Var& f_in, const BlockVars& p, const ModalityMask& mask, const BlockDims& dims,
                      const BlockOptions& options) {
  if (f_in.shape().size() != 3 || f_in.shape()[2] != dims.f) {
    throw DimensionError("mom_block_forward: F_in must be [b,l,f=" + std::to_string(dims.f) + "], got " +
                         shape_string(f_in.shape()));
  }
  if (f_in.shape()[0] != mask.batch() || f_in.shape()[1] != mask.length()) {
    throw DimensionError("mom_block_forward: F_in " + shape_string(f_in.shape()) + " does not match mask [" +
                         std::to_string(mask.batch()) + "," + std::to_string(mask.length()) + "]");
  }
  const std::size_t d = dims.d, n = dims.n, r = dims.r;

  Var xz = modal_linear(f_in, p.in_proj, mask);
  Var x = ops::slice_last(xz, 0, d);
  Var z = ops::slice_last(xz, d, 2 * d);
  Var u = ops::silu(ops::conv1d_causal_depthwise(x, p.conv_kernel));

  Var dbc = modal_linear(u, p.x_proj, mask);
  Var delta_low = ops::slice_last(dbc, 0, r);
  Var b = ops::slice_last(dbc, r, r + n);
  Var c = ops::slice_last(dbc, r + n, r + 2 * n);

  Var a = ops::neg_exp(p.a_log);
  if (options.fused) {
    Var delta = ops::softplus(modal_linear(delta_low, p.dt_proj, mask));
    Var y = discretized_scan(delta, u, a, b, c, options.discretization);
    return modal_linear(ops::gated_residual(y, u, z), p.out_proj, mask);
  }
  Discretized disc = discretize(u, delta_low, b, p.dt_proj, a, mask, options.discretization);
  Var y = selective_scan(disc.a_bar, disc.b_bar, c, options.scan);

  Var o = ops::gated_residual(y, u, z);
  return modal_linear(o, p.out_proj, mask);
}

Tensor mom_block_forward(const Tensor& f_in, const MoMBlockParams& params, const ModalityMask& mask,
                         const SparsityConfig& cfg, const BlockOptions& options) {
  const BlockDims dims = infer_dims(params);
  params.validate(dims, cfg, mask.num_modalities());
  Tape tape;
  BlockVars vars = bind_block(tape, params, false);
  return mom_block_forward(tape.constant(f_in), vars, mask, dims, options).value();
}

}  // namespace mom
