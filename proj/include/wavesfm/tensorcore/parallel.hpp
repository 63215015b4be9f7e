#pragma once

#include <cstddef>
#include <functional>

namespace wavesfm::tc {

// Worker count: WAVESFM_THREADS if set and positive, else hardware
// concurrency (at least 1).
std::size_t worker_threads();

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = worker_threads()).
// Indices are handed out in contiguous blocks; the first exception thrown by
// any worker is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, std::size_t threads = 0);

}  // namespace wavesfm::tc
