#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace transport {

namespace detail {
inline std::atomic<int>& worker_setting() {
  static std::atomic<int> workers{0};
  return workers;
}
}  // namespace detail

/// Caps the number of threads used by parallel loops. Zero restores the
/// default (hardware concurrency).
inline void set_workers(int n) { detail::worker_setting().store(std::max(0, n)); }

inline int workers() {
  const int n = detail::worker_setting().load();
  if (n > 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, count). Each index writes only its own output
/// slot, so results do not depend on the worker count.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers()), count);
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace transport
