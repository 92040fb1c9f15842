#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace capcmk {

// Assembly parallelism cap: min(hardware, CAPCMK_THREADS). At least 1.
inline int max_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("CAPCMK_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) hw = std::min(hw, cap);
  }
  return hw;
}

// Chunked node-parallel loop. fn(begin, end) must only write disjoint slots.
template <typename Fn>
void parallel_for(int n, Fn&& fn, int grain = 4096) {
  int threads = max_threads();
  if (threads <= 1 || n <= grain) {
    fn(0, n);
    return;
  }
  int chunks = std::min(threads, (n + grain - 1) / grain);
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  int per = (n + chunks - 1) / chunks;
  for (int c = 0; c < chunks; ++c) {
    int lo = c * per;
    int hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

} // namespace capcmk
