#pragma once

#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ahmm {

// Static-partition parallel loop. Work items must be independent; results
// must not depend on which worker runs an index (all our particle steps use
// slot-keyed RNG streams, so outputs are identical for any thread count).
// The first exception thrown by a worker is rethrown on the calling thread.
template <class Fn>
inline void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n < 2) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline int hardware_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace ahmm
