#pragma once
// Chunked parallel-for over an index range. Worker count defaults to the
// hardware concurrency and is capped by the UFREC_THREADS environment
// variable. Bodies must write only to their own index's output slot so the
// result is identical for any worker count.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ufrec {

inline int worker_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n <= 0) n = 1;
  if (const char* cap = std::getenv("UFREC_THREADS")) {
    const int c = std::atoi(cap);
    if (c >= 1 && c < n) n = c;
  }
  return n;
}

inline void parallel_for(size_t n, const std::function<void(size_t)>& body) {
  const int workers = worker_count();
  if (workers <= 1 || n < 2) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const int use = static_cast<int>(std::min<size_t>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(use);
  std::exception_ptr first_error;
  std::mutex error_mu;
  for (int w = 0; w < use; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (size_t i = static_cast<size_t>(w); i < n; i += use) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ufrec
