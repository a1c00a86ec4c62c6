#pragma once

#include <cstddef>
#include <functional>

namespace sgm {

/// Worker cap used by every parallel loop. 0 means hardware concurrency.
void set_thread_limit(unsigned threads);
unsigned thread_limit();

/// Runs body(begin, end) over a static partition of [0, n). Each index is
/// processed exactly once; results must be written to per-index slots.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace sgm
