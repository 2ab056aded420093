#pragma once

#include <cstdint>

namespace mom::flops {

// Instrumented FLOP tally. Kernels covered by the analytic FLOPs model
// report the multiply-adds they execute here (2 FLOPs each); everything else
// (norms, activations, lookups, residual adds) is free by convention.
// The tally is thread-local and only active inside a ScopedCounter.
void tally(std::uint64_t flops) noexcept;
bool active() noexcept;

class ScopedCounter {
 public:
  ScopedCounter() noexcept;
  ~ScopedCounter();
  ScopedCounter(const ScopedCounter&) = delete;
  ScopedCounter& operator=(const ScopedCounter&) = delete;

  std::uint64_t total() const noexcept;

 private:
  std::uint64_t* previous_;
  std::uint64_t count_ = 0;
};

}  // namespace mom::flops
