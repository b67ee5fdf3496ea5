#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace ldk {

// Upper bound on worker threads used by parallel_for. 0 means hardware
// concurrency.
void set_max_threads(int threads);
int max_threads();

// Calls body(i) for every i in [begin, end). Work is split into contiguous
// chunks; each index is visited exactly once, so results written per index
// do not depend on the thread count. Nested calls run serially.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

// Fixed-order pairwise summation. The result depends only on the order of
// the input, never on scheduling.
double pairwise_sum(std::span<const double> values);

}  // namespace ldk
