#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace embcurate {

/// Process-wide cap on worker threads. Initialized from EMBCURATE_THREADS,
/// falling back to the hardware concurrency.
unsigned thread_count();
void set_thread_count(unsigned threads);

/// Calls `body(chunk_begin, chunk_end)` for consecutive chunks of `grain`
/// indices covering [begin, end). Chunk boundaries depend only on `grain`,
/// never on the thread count, so bodies that write disjoint outputs give
/// identical results for any degree of parallelism.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, std::size_t grain, Body&& body) {
  if (end <= begin) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (end - begin + grain - 1) / grain;
  const std::size_t workers = std::min<std::size_t>(thread_count(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t lo = begin + c * grain;
      body(lo, std::min(end, lo + grain));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      const std::size_t lo = begin + c * grain;
      try {
        body(lo, std::min(end, lo + grain));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(chunks);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace embcurate
