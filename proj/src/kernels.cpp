#include "kernels.hpp"

#include <cmath>
#include <vector>

#include "mom/flop_counter.hpp"

#ifdef __AVX512F__
#include <immintrin.h>
#endif

#if defined(MOM_HAVE_LIBMVEC) && defined(__AVX512F__)
extern "C" __m512d _ZGVeN8v_exp(__m512d);
#define MOM_VECTOR_EXP 1
#endif

namespace mom::kernels {

namespace {

// Y[R rows, C cols] += X * W for one register tile; k ascending. The vector
// tiles below compute the same fused multiply-add chain per element.
template <std::size_t R, std::size_t C>
inline void tile(const double* x, std::size_t ldx, std::size_t fin, const double* w, std::size_t ldw, double* y,
                 std::size_t ldy) {
  double acc[R][C];
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) acc[r][c] = y[r * ldy + c];
  }
  for (std::size_t k = 0; k < fin; ++k) {
    const double* wk = w + k * ldw;
    for (std::size_t r = 0; r < R; ++r) {
      const double a = x[r * ldx + k];
      for (std::size_t c = 0; c < C; ++c) acc[r][c] = std::fma(a, wk[c], acc[r][c]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < C; ++c) y[r * ldy + c] = acc[r][c];
  }
}

#ifdef __AVX512F__
// R rows x 16 columns held in 2R zmm accumulators.
template <std::size_t R>
inline void tile16(const double* x, std::size_t ldx, std::size_t fin, const double* w, std::size_t ldw, double* y,
                   std::size_t ldy) {
  __m512d lo[R], hi[R];
  for (std::size_t r = 0; r < R; ++r) {
    lo[r] = _mm512_loadu_pd(y + r * ldy);
    hi[r] = _mm512_loadu_pd(y + r * ldy + 8);
  }
  for (std::size_t k = 0; k < fin; ++k) {
    const __m512d w0 = _mm512_loadu_pd(w + k * ldw);
    const __m512d w1 = _mm512_loadu_pd(w + k * ldw + 8);
    for (std::size_t r = 0; r < R; ++r) {
      const __m512d a = _mm512_set1_pd(x[r * ldx + k]);
      lo[r] = _mm512_fmadd_pd(a, w0, lo[r]);
      hi[r] = _mm512_fmadd_pd(a, w1, hi[r]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    _mm512_storeu_pd(y + r * ldy, lo[r]);
    _mm512_storeu_pd(y + r * ldy + 8, hi[r]);
  }
}
#endif

// Y[n,fout] += X[n,fin] * W[fin,fout]. Column panels outermost so a
// [fin, 16] slice of W stays cache resident across all row blocks.
void accumulate(const double* x, std::size_t n, std::size_t fin, const double* w, std::size_t fout, double* y) {
  std::size_t j = 0;
#ifdef __AVX512F__
  for (; j + 16 <= fout; j += 16) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) tile16<8>(x + i * fin, fin, fin, w + j, fout, y + i * fout + j, fout);
    for (; i + 4 <= n; i += 4) tile16<4>(x + i * fin, fin, fin, w + j, fout, y + i * fout + j, fout);
    for (; i < n; ++i) tile16<1>(x + i * fin, fin, fin, w + j, fout, y + i * fout + j, fout);
  }
#endif
  for (; j + 8 <= fout; j += 8) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) tile<4, 8>(x + i * fin, fin, fin, w + j, fout, y + i * fout + j, fout);
    for (; i < n; ++i) tile<1, 8>(x + i * fin, fin, fin, w + j, fout, y + i * fout + j, fout);
  }
  for (; j < fout; ++j) {
    for (std::size_t i = 0; i < n; ++i) tile<1, 1>(x + i * fin, fin, fin, w + j, fout, y + i * fout + j, fout);
  }
}

std::vector<double> transpose(const double* a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  }
  return t;
}

}  // namespace

void gemm(const double* x, std::size_t n, std::size_t fin, const double* w, std::size_t fout,
          const double* bias, double* y) {
  flops::tally(2ULL * n * fin * fout);
  for (std::size_t i = 0; i < n; ++i) {
    double* yi = y + i * fout;
    for (std::size_t j = 0; j < fout; ++j) yi[j] = bias ? bias[j] : 0.0;
  }
  accumulate(x, n, fin, w, fout, y);
}

void gemm_grad_input(const double* dy, std::size_t n, std::size_t fout, const double* w, std::size_t fin,
                     double* dx) {
  const std::vector<double> wt = transpose(w, fin, fout);
  accumulate(dy, n, fout, wt.data(), fin, dx);
}

void gemm_grad_weight(const double* x, const double* dy, std::size_t n, std::size_t fin, std::size_t fout,
                      double* dw, double* db) {
  const std::vector<double> xt = transpose(x, n, fin);
  accumulate(xt.data(), fin, n, dy, fout, dw);
  if (db) {
    for (std::size_t r = 0; r < n; ++r) {
      const double* gr = dy + r * fout;
      for (std::size_t j = 0; j < fout; ++j) db[j] += gr[j];
    }
  }
}

void exp_inplace(double* x, std::size_t n) {
  std::size_t i = 0;
#ifdef MOM_VECTOR_EXP
  for (; i + 8 <= n; i += 8) _mm512_storeu_pd(x + i, _ZGVeN8v_exp(_mm512_loadu_pd(x + i)));
  if (i < n) {
    // Tail through the same vector routine so results never depend on position.
    alignas(64) double buf[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    for (std::size_t j = i; j < n; ++j) buf[j - i] = x[j];
    _mm512_store_pd(buf, _ZGVeN8v_exp(_mm512_load_pd(buf)));
    for (std::size_t j = i; j < n; ++j) x[j] = buf[j - i];
  }
#else
  for (; i < n; ++i) x[i] = std::exp(x[i]);
#endif
}

}  // namespace mom::kernels
