#pragma once

#include <cstddef>
#include <functional>

namespace ncanet {

// requested = 0 means hardware concurrency. The NCANET_THREADS environment
// variable, when set to a positive integer, caps the result.
std::size_t worker_threads(std::size_t requested = 0);

// Runs f(0..n-1) on up to `threads` workers. Items are claimed dynamically;
// callers write results into per-index slots. The exception from the lowest
// failing index is rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& f);

}  // namespace ncanet
