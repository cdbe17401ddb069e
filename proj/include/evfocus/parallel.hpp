#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace evfocus {

/// Static-chunked parallel index loop. Tasks must write to disjoint slots so
/// the result is identical to the serial order regardless of thread count.
template <class Fn>
void parallel_for(size_t count, Fn&& fn, unsigned threads = 0) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  if (threads <= 1 || count < 2) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  threads = unsigned(std::min<size_t>(threads, count));
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (size_t i = t; i < count; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace evfocus
