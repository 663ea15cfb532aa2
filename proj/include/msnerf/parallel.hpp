#pragma once

#include <functional>

namespace msnerf {

// Worker count from MSNERF_THREADS, else the hardware concurrency.
int default_threads();

// Runs fn(0..count-1) on up to `threads` workers. Work items must write to
// disjoint outputs; the result is then independent of the thread count.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace msnerf
