#include "mom/flop_counter.hpp"

namespace mom::flops {
namespace {
thread_local std::uint64_t* current = nullptr;
}

void tally(std::uint64_t flops) noexcept {
  if (current) *current += flops;
}

bool active() noexcept { return current != nullptr; }

ScopedCounter::ScopedCounter() noexcept : previous_(current) { current = &count_; }

ScopedCounter::~ScopedCounter() { current = previous_; }

std::uint64_t ScopedCounter::total() const noexcept { return count_; }

}  // namespace mom::flops
