#pragma once

#include <cstddef>
#include <functional>

namespace ivcace {

/// Worker count from IVCACE_WORKERS, else 1.
int default_worker_count();

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// executed exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception thrown by any
/// task is rethrown after all workers join.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace ivcace
