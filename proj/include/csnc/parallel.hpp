#pragma once

#include <cstddef>
#include <functional>

namespace csnc {

/// Splits [0, count) into `workers` contiguous ranges (the last ones may be
/// empty) and runs fn(begin, end, worker_index) on each, one std::thread per
/// non-empty range. The partition depends only on (count, workers).
/// Exceptions from workers are rethrown on the calling thread (first worker
/// index wins).
void parallel_ranges(std::size_t count, std::size_t workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Number of hardware threads, at least 1.
std::size_t hardware_threads();

}  // namespace csnc
