#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace plural {

inline int& num_threads_ref() {
  static int n = 1;
  return n;
}

inline void set_num_threads(int n) { num_threads_ref() = n < 1 ? 1 : n; }
inline int num_threads() { return num_threads_ref(); }

// Splits [0, n) into contiguous chunks, one per worker. Each index is
// processed by exactly one thread, so results never depend on the thread
// count as long as fn writes only to its own indices.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const int threads = static_cast<int>(std::min<std::size_t>(num_threads(), n));
  if (threads <= 1 || n < 2) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const std::size_t b = std::min(n, static_cast<std::size_t>(t) * chunk);
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace plural
