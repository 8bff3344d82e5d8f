#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace slscan {

namespace detail {

inline int& thread_override() {
  static int value = 0;
  return value;
}

inline bool& inside_parallel_region() {
  thread_local bool flag = false;
  return flag;
}

}  // namespace detail

/// Worker count for parallel loops. 0 restores the default, which is the
/// SLSCAN_THREADS environment variable or the hardware concurrency.
inline void set_num_threads(int n) { detail::thread_override() = std::max(0, n); }

inline int num_threads() {
  if (detail::thread_override() > 0) return detail::thread_override();
  if (const char* env = std::getenv("SLSCAN_THREADS")) {
    try {
      int v = std::stoi(env);
      if (v > 0) return v;
    } catch (...) {
    }
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs body(chunk, begin, end) over a static partition of [0, count) into
/// contiguous chunks. Chunk boundaries depend only on count and the worker
/// count; callers combine per-chunk results in chunk order so the outcome
/// does not depend on scheduling. Nested calls run serially.
template <class Body>
void parallel_chunks(std::size_t count, Body&& body) {
  if (count == 0) return;
  std::size_t workers = static_cast<std::size_t>(num_threads());
  if (detail::inside_parallel_region() || workers <= 1 || count == 1) {
    body(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  workers = std::min(workers, count);
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t begin = count * w / workers;
    std::size_t end = count * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      detail::inside_parallel_region() = true;
      try {
        body(w, begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
      detail::inside_parallel_region() = false;
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Number of chunks parallel_chunks will use for count items.
inline std::size_t chunk_count(std::size_t count) {
  if (count == 0) return 0;
  std::size_t workers = static_cast<std::size_t>(num_threads());
  if (detail::inside_parallel_region() || workers <= 1) return 1;
  return std::min(workers, count);
}

template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  parallel_chunks(count, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) body(i);
  });
}

}  // namespace slscan
