#pragma once

#include <cstddef>
#include <functional>

namespace meanfield {

// Worker count used by parallel_for. 0 means hardware concurrency.
void set_threads(unsigned n);
unsigned threads();

// Runs fn(i) for i in [0, n). Results must be written to slot i by the caller;
// the first exception thrown is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace meanfield
