#pragma once

#include <cstddef>

#include "mom/autodiff.hpp"

namespace mom {

enum class ScanImpl { sequential, chunked };

struct ScanOptions {
  ScanImpl impl = ScanImpl::sequential;
  // Segment length for the chunked variant; 0 means one chunk of length l.
  std::size_t chunk = 0;
};

// Selective-scan recurrence over a_bar, b_bar [b,l,d,n] and c [b,l,n]:
//   h_0 = 0;  h_t = h_{t-1} * a_bar_t + b_bar_t;  y[:,t,c] = sum_s h_t[c,s] c_t[s]
// Returns y [b,l,d].
//
// The chunked variant scans each segment from a zero state while tracking the
// running product of a_bar, then folds the carried state into every segment
// position: h_t = local_t + prod_t * h_carry. Both variants share one
// backward pass over the materialised states.
Var selective_scan(const Var& a_bar, const Var& b_bar, const Var& c, const ScanOptions& options = {});
Tensor selective_scan(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c, const ScanOptions& options = {});

}  // namespace mom
