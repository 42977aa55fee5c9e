#pragma once

#include <functional>

namespace vfpp {

/// Worker cap for intra-stage parallelism (0 = hardware concurrency).
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [begin, end) over contiguous chunks. Each index must
/// write only its own output slots, which keeps results independent of the
/// thread count.
void parallel_for(int begin, int end, const std::function<void(int)>& fn);

}  // namespace vfpp
