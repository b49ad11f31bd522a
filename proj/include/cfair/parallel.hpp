#pragma once

#include <cstddef>
#include <functional>

namespace cfair {

/// Worker count used by parallel_for; 0 selects hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Splits [0, n) into contiguous chunks and runs `body(begin, end)` on each.
/// Results must not depend on the schedule; callers key all randomness by
/// index. The first exception thrown by any chunk is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cfair
