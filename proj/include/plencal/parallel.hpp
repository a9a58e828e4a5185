#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace plencal {

/// Worker thread count: min(hardware, PLENCAL_THREADS when set). At least 1.
int default_thread_count();

/// Resolves a requested count (0 = default) against the PLENCAL_THREADS cap.
int resolve_thread_count(int requested);

/// Runs fn(thread_index, begin, end) over a static contiguous partition of
/// [0, n). Chunk boundaries depend only on (n, threads), so results that are
/// merged in thread-index order are reproducible for a fixed thread count.
void parallel_chunks(std::size_t n, int threads,
                     const std::function<void(int, std::size_t, std::size_t)>& fn);

}  // namespace plencal
