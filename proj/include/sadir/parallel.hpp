#pragma once

#include <cstddef>
#include <functional>

namespace sadir {

// Worker count: SADIR_THREADS if set and positive, else hardware concurrency.
unsigned worker_count();

// Runs fn(i) for i in [0, n). Each index is visited exactly once; callers
// must only write to index-private outputs so results do not depend on the
// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

} // namespace sadir
