#pragma once

#include <cstddef>
#include <functional>

namespace branchlab {

/// Hardware concurrency, capped by BRANCHLAB_THREADS when set.
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to worker_count() threads. The first
/// exception (lowest index) is rethrown after all workers finish.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace branchlab
