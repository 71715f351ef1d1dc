#pragma once

#include <cstddef>
#include <functional>

namespace msvar {

/// Upper bound on worker threads used by per-pixel loops. Initialized from
/// MSVAR_THREADS when set, otherwise 1.
std::size_t max_threads();
void set_max_threads(std::size_t n);

/// Reads MSVAR_THREADS. Throws ParameterError unless it is a positive integer.
void configure_threads_from_env();

/// Runs body(begin, end) over [0, count) split into contiguous chunks. Work
/// below `grain` items stays on the calling thread. Bodies must not reduce
/// across chunks.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t grain = 16384);

}  // namespace msvar
