#pragma once

#include <cstddef>
#include <functional>

// Tiny parallel-for with static chunking.  Work item i always writes slot i,
// so results are independent of the thread count; reductions are done by the
// caller in index order.

namespace szsdg {

void set_max_threads(int n);  // n <= 1 forces serial execution
int max_threads();

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace szsdg
