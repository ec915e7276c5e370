#pragma once

#include <cstddef>
#include <functional>

namespace flowgrad {

/// Worker cap: explicit value if > 0, else FLOWGRAD_THREADS, else hardware concurrency.
std::size_t resolve_threads(std::size_t requested = 0);

/// Process-wide default used when an operation is not given an explicit cap.
void set_default_threads(std::size_t n);
std::size_t default_threads();

/// Run body(i) for i in [0, n) on up to `threads` workers with static
/// contiguous chunks. Callers write results into per-index slots, so the
/// outcome does not depend on the thread count. The first exception thrown
/// by any worker is rethrown after all workers have joined.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t threads = 0);

}  // namespace flowgrad
