#pragma once

#include <cstddef>
#include <functional>

namespace laood {

/// Worker count honoring LAOOD_THREADS (unset or 0 = hardware concurrency).
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers write
/// results by index so output never depends on scheduling. If any body throws, the
/// exception from the lowest failing index is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace laood
