#pragma once

#include <cstddef>
#include <functional>

namespace affreal {

/// Thread count from AFFREAL_THREADS, else the hardware concurrency.
unsigned default_threads();

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to `threads` threads.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace affreal
