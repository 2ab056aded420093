#pragma once

// Raw loops behind the differentiable ops. Row-major, no allocation beyond
// scratch, fixed accumulation order.

#include <cstddef>

namespace mom::kernels {

// Y[n,fout] = bias + X[n,fin] * W[fin,fout]. Every output element accumulates
// over fin in ascending order regardless of n or its position in a tile, so
// routing rows through separate calls reproduces the dense product bit for bit.
void gemm(const double* x, std::size_t n, std::size_t fin, const double* w, std::size_t fout,
          const double* bias, double* y);

// dX[n,fin] += dY[n,fout] * W^T
void gemm_grad_input(const double* dy, std::size_t n, std::size_t fout, const double* w, std::size_t fin,
                     double* dx);

// dW[fin,fout] += X^T * dY; dB[fout] += column sums of dY (when dB != nullptr).
void gemm_grad_weight(const double* x, const double* dy, std::size_t n, std::size_t fin, std::size_t fout,
                      double* dw, double* db);

// x[i] = exp(x[i]). Vectorised through libmvec when available; results agree
// with std::exp to a few ulp and are deterministic on a given build.
void exp_inplace(double* x, std::size_t n);

}  // namespace mom::kernels
