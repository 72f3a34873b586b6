#pragma once

#include <functional>

namespace l2caf {

/// Runs fn(0..n-1) on a worker pool. Thread count is hardware concurrency
/// capped by the L2CAF_THREADS environment variable; results must be written
/// to per-index slots so the outcome is independent of scheduling.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace l2caf
