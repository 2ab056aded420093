#include "mom/scan.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "mom/errors.hpp"
#include "mom/flop_counter.hpp"

namespace mom {
namespace {

struct ScanDims {
  std::size_t b, len, d, n;
};

ScanDims check_shapes(const Shape& a, const Shape& bb, const Shape& c) {
  if (a.size() != 4) throw DimensionError("selective_scan: a_bar must be [b,l,d,n], got " + shape_string(a));
  if (bb != a) {
    throw DimensionError("selective_scan: b_bar " + shape_string(bb) + " does not match a_bar " + shape_string(a));
  }
  if (c.size() != 3 || c[0] != a[0] || c[1] != a[1] || c[2] != a[3]) {
    throw DimensionError("selective_scan: c must be [b,l,n] = [" + std::to_string(a[0]) + "," +
                         std::to_string(a[1]) + "," + std::to_string(a[3]) + "], got " + shape_string(c));
  }
  return {a[0], a[1], a[2], a[3]};
}

// Fills states[b,l,d,n] with h_t.
void scan_sequential(const ScanDims& s, const double* a, const double* bb, double* states) {
  const std::size_t dn = s.d * s.n;
  flops::tally(2ULL * s.b * s.len * dn);
  for (std::size_t i = 0; i < s.b; ++i) {
    const std::size_t base = i * s.len * dn;
    for (std::size_t t = 0; t < s.len; ++t) {
      const std::size_t off = base + t * dn;
      double* __restrict h = states + off;
      if (t == 0) {
        std::copy_n(bb + off, dn, h);
      } else {
        const double* __restrict prev = states + off - dn;
        for (std::size_t j = 0; j < dn; ++j) h[j] = prev[j] * a[off + j] + bb[off + j];
      }
    }
  }
}

void scan_chunked(const ScanDims& s, std::size_t chunk, const double* a, const double* bb, double* states) {
  const std::size_t dn = s.d * s.n;
  if (chunk == 0 || chunk > s.len) chunk = s.len;
  std::vector<double> prod(s.len * dn);
  std::vector<double> carry(dn);
  flops::tally(4ULL * s.b * s.len * dn);
  for (std::size_t i = 0; i < s.b; ++i) {
    const std::size_t base = i * s.len * dn;
    // Pass 1: every segment from a zero state; segments are independent.
    for (std::size_t t0 = 0; t0 < s.len; t0 += chunk) {
      const std::size_t t1 = std::min(s.len, t0 + chunk);
      for (std::size_t t = t0; t < t1; ++t) {
        const std::size_t off = base + t * dn;
        double* h = states + off;
        double* p = prod.data() + t * dn;
        if (t == t0) {
          std::copy_n(bb + off, dn, h);
          std::copy_n(a + off, dn, p);
        } else {
          const double* hp = h - dn;
          const double* pp = p - dn;
          for (std::size_t j = 0; j < dn; ++j) {
            h[j] = hp[j] * a[off + j] + bb[off + j];
            p[j] = pp[j] * a[off + j];
          }
        }
      }
    }
    // Pass 2: fold the state carried out of the previous segments.
    std::fill(carry.begin(), carry.end(), 0.0);
    for (std::size_t t0 = 0; t0 < s.len; t0 += chunk) {
      const std::size_t t1 = std::min(s.len, t0 + chunk);
      if (t0 > 0) {
        for (std::size_t t = t0; t < t1; ++t) {
          double* h = states + base + t * dn;
          const double* p = prod.data() + t * dn;
          for (std::size_t j = 0; j < dn; ++j) h[j] += p[j] * carry[j];
        }
      }
      std::copy_n(states + base + (t1 - 1) * dn, dn, carry.data());
    }
  }
}

}  // namespace

Var selective_scan(const Var& a_bar, const Var& b_bar, const Var& c, const ScanOptions& options) {
  const ScanDims s = check_shapes(a_bar.shape(), b_bar.shape(), c.shape());
  const Tensor av = a_bar.value(), bv = b_bar.value(), cv = c.value();
  Tensor states(av.shape());
  if (options.impl == ScanImpl::sequential) {
    scan_sequential(s, av.data().data(), bv.data().data(), states.mutable_data().data());
  } else {
    scan_chunked(s, options.chunk, av.data().data(), bv.data().data(), states.mutable_data().data());
  }
  const std::size_t dn = s.d * s.n;
  Tensor y(Shape{s.b, s.len, s.d});
  auto yd = y.mutable_data();
  flops::tally(2ULL * s.b * s.len * dn);
  for (std::size_t r = 0; r < s.b * s.len; ++r) {
    const double* h = states.data().data() + r * dn;
    const double* cr = cv.data().data() + r * s.n;
    for (std::size_t ch = 0; ch < s.d; ++ch) {
      double acc = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) acc += h[ch * s.n + k] * cr[k];
      yd[r * s.d + ch] = acc;
    }
  }
  const Var inputs[] = {a_bar, b_bar, c};
  return a_bar.tape().record(
      std::move(y), inputs, [a_bar, b_bar, c, av, cv, states, s](Tape& tape, std::span<const double> g) {
        double* da = tape.grad_ptr(a_bar);
        double* db = tape.grad_ptr(b_bar);
        double* dc = tape.grad_ptr(c);
        const std::size_t dn = s.d * s.n;
        std::vector<double> dh(dn);
        for (std::size_t i = 0; i < s.b; ++i) {
          std::fill(dh.begin(), dh.end(), 0.0);
          for (std::size_t t = s.len; t-- > 0;) {
            const std::size_t row = i * s.len + t;
            const std::size_t off = row * dn;
            const double* gy = g.data() + row * s.d;
            const double* cr = cv.data().data() + row * s.n;
            const double* h = states.data().data() + off;
            for (std::size_t ch = 0; ch < s.d; ++ch) {
              for (std::size_t k = 0; k < s.n; ++k) dh[ch * s.n + k] += gy[ch] * cr[k];
            }
            if (dc) {
              for (std::size_t ch = 0; ch < s.d; ++ch) {
                for (std::size_t k = 0; k < s.n; ++k) dc[row * s.n + k] += gy[ch] * h[ch * s.n + k];
              }
            }
            if (db) {
              for (std::size_t j = 0; j < dn; ++j) db[off + j] += dh[j];
            }
            if (da && t > 0) {
              const double* hp = h - dn;
              for (std::size_t j = 0; j < dn; ++j) da[off + j] += dh[j] * hp[j];
            }
            const double* a = av.data().data() + off;
            for (std::size_t j = 0; j < dn; ++j) dh[j] *= a[j];
          }
        }
      });
}

Tensor selective_scan(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c, const ScanOptions& options) {
  Tape tape;
  return selective_scan(tape.constant(a_bar), tape.constant(b_bar), tape.constant(c), options).value();
}

}  // namespace mom
