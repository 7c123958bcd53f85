#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace polymerlab {

// Runs body(i) for i in [0, count) on up to `threads` workers. Work items
// are claimed dynamically but every result lands at its own index, so the
// caller's reduction order never depends on scheduling. The first exception
// (lowest index) is rethrown after all workers stop.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

template <typename T, typename F>
std::vector<T> parallel_map(std::size_t count, int threads, F&& fn) {
  std::vector<T> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

// Thread count from an explicit request, then POLYMERLAB_THREADS, then 1.
int resolve_threads(int requested);

}  // namespace polymerlab
