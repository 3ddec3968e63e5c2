#pragma once

#include <cstddef>
#include <functional>

namespace mapattack {

/// Worker count for per-sample parallelism: hardware concurrency, capped
/// by the MAP_ATTACK_THREADS environment variable when set.
int worker_count();

/// Runs fn(0..n-1) across up to `workers` threads. Each index runs
/// exactly once; callers write results into per-index slots so parallel
/// and serial execution produce identical output.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace mapattack
