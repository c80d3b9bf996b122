#pragma once

#include <cstddef>
#include <functional>

namespace nemo {

/// Worker count: the NEMO_THREADS environment variable when set, otherwise
/// the hardware concurrency.
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Each index must touch disjoint state. The
/// first exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace nemo
