#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace mdra {

/// Runs `fn(group, begin, end)` over `n_items` partitioned into `n_groups`
/// contiguous ranges. The grouping is fixed regardless of the thread count,
/// so per-group accumulators merged in group order give bitwise-identical
/// results on any machine concurrency.
inline void parallel_for_groups(
    int n_items, int n_groups, int threads,
    const std::function<void(int, int, int)>& fn) {
  if (n_items <= 0) return;
  if (n_groups > n_items) n_groups = n_items;
  if (threads <= 0) {
    unsigned hc = std::thread::hardware_concurrency();
    threads = hc == 0 ? 1 : static_cast<int>(hc);
  }
  auto range = [&](int g) {
    int begin = static_cast<int>(static_cast<int64_t>(n_items) * g / n_groups);
    int end =
        static_cast<int>(static_cast<int64_t>(n_items) * (g + 1) / n_groups);
    return std::pair<int, int>(begin, end);
  };
  if (threads <= 1 || n_groups <= 1) {
    for (int g = 0; g < n_groups; ++g) {
      auto [b, e] = range(g);
      fn(g, b, e);
    }
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&]() {
    while (true) {
      int g = next.fetch_add(1);
      if (g >= n_groups) return;
      auto [b, e] = range(g);
      try {
        fn(g, b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int nw = std::min(threads, n_groups);
  pool.reserve(nw);
  for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mdra
