#pragma once

#include <cstddef>
#include <functional>

namespace cts {

/// Global intra-op thread count. 1 (the default) disables all parallelism.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs body(begin, end) over disjoint chunks of [0, n). Each index is
/// processed by exactly one worker with no cross-chunk reduction, so results
/// do not depend on the thread count.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cts
