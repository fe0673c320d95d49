#pragma once

#include <functional>

namespace hams {

// Worker count from HAMS_THREADS (0 or unset = hardware concurrency).
int worker_count();

// Runs fn(i) for i in [0, n). Work items must write to disjoint slots;
// scheduling order is unspecified but completion is barriered. Falls back to
// a plain loop when n is small or only one worker is available.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace hams
