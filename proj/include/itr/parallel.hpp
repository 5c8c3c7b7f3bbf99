#pragma once
#include <atomic>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace itr {

// ITR_THREADS caps worker count; 0 / unset means hardware concurrency.
inline int max_threads() {
  if (const char* env = std::getenv("ITR_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs body(i) for i in [0, n). Tasks must be independent and write only to
// their own slots; aggregation stays with the caller so results do not depend
// on the schedule. Exceptions are rethrown on the calling thread (first one
// wins by task index).
inline void parallel_for(int n, int n_threads, const std::function<void(int)>& body) {
  if (n <= 0) return;
  if (n_threads > n) n_threads = n;
  if (n_threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errs(static_cast<size_t>(n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n_threads));
  for (int w = 0; w < n_threads; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) break;
        try {
          body(i);
        } catch (...) {
          errs[static_cast<size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

}  // namespace itr
