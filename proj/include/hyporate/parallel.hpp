#ifndef HYPORATE_PARALLEL_HPP_
#define HYPORATE_PARALLEL_HPP_

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace hyporate {

/// Worker count: HYPO_RATE_THREADS caps it, otherwise hardware concurrency.
inline unsigned thread_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HYPO_RATE_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return std::min<unsigned>(static_cast<unsigned>(v), hw);
  }
  return hw;
}

/// Static block partition of [0,n). Workers write to disjoint index ranges;
/// any reduction over the results must be done by the caller in index order
/// so output is identical for every thread count.
inline void parallel_for(size_t n, const std::function<void(size_t, size_t)>& body) {
  const unsigned workers = std::min<size_t>(thread_count(), std::max<size_t>(n, 1));
  if (workers <= 1 || n < 128) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const size_t lo = std::min(n, w * chunk);
    const size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi]() { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hyporate

#endif  // HYPORATE_PARALLEL_HPP_
