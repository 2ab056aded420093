#pragma once

#include <array>
#include <cstddef>
#include <random>
#include <string>

#include "mom/autodiff.hpp"
#include "mom/routing.hpp"
#include "mom/scan.hpp"
#include "mom/tensor.hpp"

namespace mom {

// f: model width, d: expanded width, n: state size, r: dt rank, k: conv width.
struct BlockDims {
  std::size_t f = 0;
  std::size_t d = 0;
  std::size_t n = 16;
  std::size_t r = 0;
  std::size_t k = 4;

  // expand = 2, r = ceil(f / 16), n = 16, k = 4.
  static BlockDims defaults(std::size_t f);
  void validate() const;
  std::size_t x_proj_out() const noexcept { return r + 2 * n; }
};

// Which of the four projections carry one weight per modality.
struct SparsityConfig {
  bool in_proj = false;
  bool x_proj = false;
  bool dt_proj = false;
  bool out_proj = false;

  static SparsityConfig dense() { return {}; }
  static SparsityConfig all() { return {true, true, true, true}; }
  static SparsityConfig from_bits(unsigned bits);

  unsigned bits() const noexcept;
  // "none" or e.g. "in_proj+out_proj".
  std::string name() const;
  // Circled-digit label, e.g. "①+④"; "none" for the dense baseline.
  std::string label() const;

  friend bool operator==(const SparsityConfig&, const SparsityConfig&) = default;
};

// All 16 configurations, dense first, singles, pairs, triples, then all four.
std::array<SparsityConfig, 16> enumerate_sparsity_configs();

enum class Discretization { literal, zoh_exp };

struct BlockOptions {
  Discretization discretization = Discretization::zoh_exp;
  // Form a_bar / b_bar inside the recurrence (discretized_scan). When false the
  // two [b,l,d,n] tensors are materialised and `scan` picks the variant.
  bool fused = true;
  ScanOptions scan;
};

struct MoMBlockParams {
  RoutedWeights in_proj;   // [f, 2d]  fused x, z
  RoutedWeights x_proj;    // [d, r+2n] fused delta, B, C
  RoutedWeights dt_proj;   // [r, d] with bias [d]
  RoutedWeights out_proj;  // [d, f]
  Tensor conv_kernel;      // [d, k], shared
  Tensor a_log;            // [d, n], shared; state matrix A = -exp(a_log)

  Tensor state_matrix() const;
  void validate(const BlockDims& dims, const SparsityConfig& cfg, std::size_t num_modalities) const;
};

// Shared pieces drawn once, replicated across modalities for decoupled projections.
MoMBlockParams init_block_params(const BlockDims& dims, const SparsityConfig& cfg, std::size_t num_modalities,
                                 std::mt19937_64& rng);

struct BlockVars {
  RoutedVars in_proj, x_proj, dt_proj, out_proj;
  Var conv_kernel;
  Var a_log;
};

BlockVars bind_block(Tape& tape, const MoMBlockParams& params, bool requires_grad);

// a_bar = delta (x) A  (literal)  or  exp(delta (x) A)  (zoh_exp);  [b,l,d] x [d,n] -> [b,l,d,n]
Var discretize_a(const Var& delta, const Var& a, Discretization mode);
// b_bar[.,c,s] = delta[c] * u[c] * B[s];  [b,l,d], [b,l,d], [b,l,n] -> [b,l,d,n]
Var discretize_b(const Var& delta, const Var& u, const Var& b);

// discretize_a + discretize_b + sequential selective_scan in one pass, with the
// same result and FLOP tally; only the states h are kept for backward.
// delta, u [b,l,d]; a [d,n]; b, c [b,l,n] -> y [b,l,d]
Var discretized_scan(const Var& delta, const Var& u, const Var& a, const Var& b, const Var& c, Discretization mode);

struct Discretized {
  Var a_bar, b_bar, delta;
};

// delta = softplus(M(delta_low, W_dt, b; mask)), then a_bar / b_bar.
Discretized discretize(const Var& u, const Var& delta_low, const Var& b, const RoutedVars& dt_proj, const Var& a,
                       const ModalityMask& mask, Discretization mode);

struct DiscretizedTensors {
  Tensor a_bar, b_bar, delta;
};
DiscretizedTensors discretize(const Tensor& u, const Tensor& delta_low, const Tensor& b, const RoutedWeights& dt_proj,
                              const Tensor& a, const ModalityMask& mask, Discretization mode);

Var mom_block_forward(const Var& f_in, const BlockVars& params, const ModalityMask& mask, const BlockDims& dims,
                      const BlockOptions& options = {});

Tensor mom_block_forward(const Tensor& f_in, const MoMBlockParams& params, const ModalityMask& mask,
                         const SparsityConfig& cfg, const BlockOptions& options = {});

// Dims implied by parameter shapes.
BlockDims infer_dims(const MoMBlockParams& params);

}  // namespace mom
