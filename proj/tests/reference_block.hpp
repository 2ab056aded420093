#pragma once

// Plain-loop Mamba block used as a test oracle. Shares no code with the
// library: every projection is a triple loop, the scan a direct recurrence.

#include <cmath>
#include <cstddef>
#include <vector>

namespace mom::testing {

struct ReferenceWeights {
  // Per-modality copies; a single entry is used for every token.
  std::vector<std::vector<double>> in_proj, x_proj, dt_proj, dt_bias, out_proj;
  std::vector<double> conv;  // [d,k]
  std::vector<double> a;     // [d,n], already negative
};

inline double ref_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double ref_silu(double x) { return x * ref_sigmoid(x); }
inline double ref_softplus(double x) { return x > 30.0 ? x : std::log(1.0 + std::exp(x)); }

// F_in [b,l,f] -> F_out [b,l,f]; ids[b*l] picks the weight copy when more than one exists.
inline std::vector<double> reference_block(const std::vector<double>& fin, std::size_t b, std::size_t len,
                                           std::size_t f, std::size_t d, std::size_t n, std::size_t r, std::size_t k,
                                           const ReferenceWeights& w, const std::vector<int>& ids, bool zoh_exp) {
  auto pick = [&](const std::vector<std::vector<double>>& copies, std::size_t token) -> const std::vector<double>& {
    return copies.size() == 1 ? copies[0] : copies[static_cast<std::size_t>(ids[token])];
  };
  const std::size_t tokens = b * len;
  std::vector<double> x(tokens * d), z(tokens * d), u(tokens * d), out(tokens * f, 0.0);
  for (std::size_t t = 0; t < tokens; ++t) {
    const auto& win = pick(w.in_proj, t);
    for (std::size_t j = 0; j < 2 * d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < f; ++i) acc += fin[t * f + i] * win[i * 2 * d + j];
      (j < d ? x[t * d + j] : z[t * d + j - d]) = acc;
    }
  }
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t c = 0; c < d; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(t) - static_cast<long>(k) + 1 + static_cast<long>(j);
          if (src < 0) continue;
          acc += w.conv[c * k + j] * x[(bi * len + static_cast<std::size_t>(src)) * d + c];
        }
        u[(bi * len + t) * d + c] = ref_silu(acc);
      }
    }
  }
  const std::size_t xo = r + 2 * n;
  for (std::size_t bi = 0; bi < b; ++bi) {
    std::vector<double> h(d * n, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t tok = bi * len + t;
      const auto& wx = pick(w.x_proj, tok);
      std::vector<double> dbc(xo, 0.0);
      for (std::size_t j = 0; j < xo; ++j) {
        for (std::size_t i = 0; i < d; ++i) dbc[j] += u[tok * d + i] * wx[i * xo + j];
      }
      const auto& wdt = pick(w.dt_proj, tok);
      const auto& bdt = pick(w.dt_bias, tok);
      std::vector<double> o(d);
      for (std::size_t c = 0; c < d; ++c) {
        double dt = bdt[c];
        for (std::size_t i = 0; i < r; ++i) dt += dbc[i] * wdt[i * d + c];
        dt = ref_softplus(dt);
        double y = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const double da = dt * w.a[c * n + s];
          const double abar = zoh_exp ? std::exp(da) : da;
          const double bbar = dt * u[tok * d + c] * dbc[r + s];
          h[c * n + s] = h[c * n + s] * abar + bbar;
          y += h[c * n + s] * dbc[r + n + s];
        }
        o[c] = (y + u[tok * d + c]) * ref_silu(z[tok * d + c]);
      }
      const auto& wout = pick(w.out_proj, tok);
      for (std::size_t j = 0; j < f; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += o[c] * wout[c * f + j];
        out[tok * f + j] = acc;
      }
    }
  }
  return out;
}

}  // namespace mom::testing
