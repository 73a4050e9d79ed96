#pragma once

#include <cstdint>
#include <functional>

namespace ncopt {

int hardware_threads();

// Resolve a --threads style request: 0 means "all hardware threads".
int resolve_threads(int requested);

// Runs fn(i) for i in [begin, end) across up to `threads` workers. Indices
// are split into contiguous chunks in worker order, so any per-index output
// written by fn can be reduced deterministically by ascending index
// afterwards. The first exception (by worker order) is rethrown.
void parallel_for(int64_t begin, int64_t end, int threads,
                  const std::function<void(int64_t)>& fn);

}  // namespace ncopt
