#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "mom/autodiff.hpp"

namespace mom {

double silu(double x);
double softplus(double x);
double sigmoid(double x);

namespace ops {

// Elementwise, identical shapes.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

Var sum(const Var& a);
Var mean(const Var& a);
// sum_i coeffs[i] * terms[i] over scalar terms.
Var weighted_sum(std::span<const Var> terms, std::span<const double> coeffs);

enum class Activation { silu, softplus };
Var activation(const Var& x, Activation which);
inline Var silu(const Var& x) { return activation(x, Activation::silu); }
inline Var softplus(const Var& x) { return activation(x, Activation::softplus); }

// -exp(x): keeps a state matrix strictly negative under any update.
Var neg_exp(const Var& x);

// Y[..., :] = X[..., :] * W + bias over the trailing axis.
Var linear(const Var& x, const Var& w, const std::optional<Var>& bias = std::nullopt);

// Same values, new shape of equal size.
Var reshape(const Var& x, Shape shape);

// Columns [begin, end) of the trailing axis.
Var slice_last(const Var& x, std::size_t begin, std::size_t end);

// y[i,t,c] = sum_j kernel[c,j] * x[i, t-k+1+j, c], zero left padding.
Var conv1d_causal_depthwise(const Var& x, const Var& kernel);

// Row-wise RMS normalisation. `gains` holds one [f] vector shared by all rows,
// or one per modality selected through `row_groups` (row -> gain index).
Var rms_norm(const Var& x, std::span<const Var> gains, std::span<const int> row_groups = {},
             double eps = 1e-6);

// (y + u) * silu(z), elementwise.
Var gated_residual(const Var& y, const Var& u, const Var& z);

// Row gather / scatter over the flattened leading axes. scatter_rows places
// src row i at destination row rows[i] of a zero [total_rows, cols] tensor.
Var gather_rows(const Var& x, std::span<const std::size_t> rows);
Var scatter_rows(const Var& src, std::span<const std::size_t> rows, std::size_t total_rows);

// out[i,:] = table[ids[i],:]
Var embedding(const Var& table, std::span<const int> ids);

// Sum over rows of -log softmax(logits[i])[targets[i]]; rows with target < 0 skipped.
Var cross_entropy_sum(const Var& logits, std::span<const int> targets);

// mean((a - b)^2)
Var mse(const Var& a, const Var& b);

}  // namespace ops
}  // namespace mom
