#pragma once

#include <cstddef>
#include <functional>

namespace qfp {

// Worker count from QFP_THREADS, defaulting to hardware concurrency.
unsigned worker_count();

// Runs body(i) for i in [0, n). Each index is handled exactly once, so results
// written to slot i are independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace qfp
