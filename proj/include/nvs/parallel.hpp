#pragma once

#include <cstdint>
#include <functional>

namespace nvs {

/// Worker cap for kernel-internal parallelism: NVS_THREADS if set, else the
/// hardware concurrency (at least 1).
int max_threads();

/// Runs fn(lo, hi) over a static contiguous partition of [begin, end). Every
/// index is owned by exactly one worker, so results are independent of the
/// thread count as long as fn writes disjoint outputs per index.
void parallel_for(std::int64_t begin, std::int64_t end, std::int64_t grain,
                  const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace nvs
