#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace polypath {

/// Resolves a requested worker count; values < 1 mean "hardware concurrency".
inline int resolve_workers(int requested) {
  if (requested >= 1) return requested;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs body(worker, i) for every i in [0, n) on up to `workers` threads.
/// Items are handed out in contiguous chunks from a shared counter. If any
/// call throws, the exception raised for the smallest item index is rethrown
/// after all workers join, so failures are reported identically for every
/// worker count.
template <class Body>
void parallel_for(std::size_t n, int workers, Body&& body, std::size_t chunk = 16) {
  if (n == 0) return;
  workers = std::max(1, std::min<int>(resolve_workers(workers), static_cast<int>((n + chunk - 1) / chunk)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(0, i);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> error_index{n};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto run = [&](int worker) {
    for (;;) {
      std::size_t begin = next.fetch_add(chunk);
      if (begin >= n) return;
      std::size_t end = std::min(n, begin + chunk);
      for (std::size_t i = begin; i < end; ++i) {
        // Items past a known failure cannot change the reported error.
        if (i > error_index.load(std::memory_order_relaxed)) return;
        try {
          body(worker, i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (i < error_index.load()) {
            error_index = i;
            error = std::current_exception();
          }
        }
      }
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(workers - 1));
  for (int w = 1; w < workers; ++w) threads.emplace_back(run, w);
  run(0);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

} // namespace polypath
