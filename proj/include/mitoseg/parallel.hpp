#pragma once

#include <cstddef>
#include <functional>

namespace mitoseg {

/// Resolves a requested worker count; 0 means one per hardware thread.
unsigned resolve_workers(unsigned requested) noexcept;

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Tasks are handed out
/// dynamically; the first exception thrown by any task is rethrown here after
/// all threads have joined.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace mitoseg
