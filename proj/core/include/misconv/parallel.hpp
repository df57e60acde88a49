#pragma once

#include <cstddef>
#include <functional>

namespace misconv {

/// Worker count: `MISCONV_THREADS` when set to a positive integer, else the
/// number of hardware threads (at least 1).
std::size_t worker_count();

/// Runs `body(i)` for every i in [0, count) across `worker_count()` threads.
/// Tasks are claimed dynamically, so `body` must write only to slot i of
/// preallocated output for results to be independent of the schedule.
/// The first exception thrown by any task is rethrown on the caller.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace misconv
