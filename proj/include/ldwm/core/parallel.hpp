#pragma once

#include <cstddef>
#include <functional>

namespace ldwm {

/// Worker cap for data-parallel loops: LDWM_THREADS if set, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Each index is processed exactly once and writes
/// only its own outputs, so results never depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ldwm
