#pragma once

#include <cstdint>
#include <functional>

namespace nldf {

/// Number of worker threads to use: `requested` if > 0, else the
/// NLDF_THREADS environment variable, else the hardware count (capped at 8).
int resolve_threads(int requested);

/// Runs fn(begin, end) over disjoint chunks of [0, n) on `threads` workers.
/// Chunks are contiguous and writes must stay within each chunk, so results
/// are independent of scheduling.
void parallel_chunks(std::int64_t n, int threads,
                     const std::function<void(std::int64_t, std::int64_t)>& fn);

}  // namespace nldf
