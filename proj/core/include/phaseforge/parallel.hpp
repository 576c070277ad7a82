#pragma once

#include <cstddef>
#include <functional>

namespace phaseforge {

/// Worker cap: PHASEFORGE_THREADS when set to a positive integer, otherwise
/// the hardware concurrency (at least 1).
std::size_t worker_threads();

/// Runs fn(i) for i in [0, count) on up to worker_threads() threads. Each
/// index runs exactly once; results must not depend on scheduling. The first
/// exception thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace phaseforge
