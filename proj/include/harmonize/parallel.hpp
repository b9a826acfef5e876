#pragma once

#include <cstddef>
#include <functional>

namespace harmonize {

// Worker count: HARMONIZE_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n). Each index is processed exactly once; callers
// write results into per-index slots so output order is deterministic. The
// first exception thrown by any body is rethrown after all workers join.
// Calls made from inside a body run serially on the calling worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace harmonize
