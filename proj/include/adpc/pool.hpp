#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace adpc {

/// Worker count: hardware concurrency, capped by ADPC_THREADS when set.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char *env = std::getenv("ADPC_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1)
        n = std::min(n, unsigned(cap));
    } catch (...) {
    }
  }
  return n;
}

/// Runs body(i) for i in [0, count) on the worker pool. The first exception
/// thrown by any task is rethrown after all workers finish.
template <typename Body> void parallel_for(std::size_t count, Body &&body) {
  const unsigned workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count)
        return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w)
      threads.emplace_back(work);
    for (std::thread &t : threads)
      t.join();
  }
  if (failure)
    std::rethrow_exception(failure);
}

} // namespace adpc
