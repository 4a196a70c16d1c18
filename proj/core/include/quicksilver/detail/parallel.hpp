#pragma once

// Minimal fork-join loop. Indices are handed out dynamically; callers write
// results into per-index slots so the outcome is independent of scheduling.

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace quicksilver::detail {

template <class F>
void parallel_for(int n, int workers, F&& f) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  auto run = [&] {
    for (int i; !failed && (i = next.fetch_add(1)) < n;) {
      try {
        f(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace quicksilver::detail
