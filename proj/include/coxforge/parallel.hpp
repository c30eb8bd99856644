#pragma once

#include <cstddef>
#include <functional>

namespace coxforge {

/// Process-wide default worker count (initially the hardware concurrency).
int default_threads();
void set_default_threads(int threads);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 means the default).
/// Every index writes only its own output slot, so results do not depend on
/// the thread count. The first exception, by index, is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace coxforge
