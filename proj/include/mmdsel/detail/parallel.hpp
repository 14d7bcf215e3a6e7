#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace mmdsel::detail {

// Runs fn over [0, count) split into contiguous blocks, one per worker.
// Callers must only write to disjoint, index-addressed outputs, which keeps
// the result independent of scheduling. The first failing block (lowest
// block index) wins when rethrowing.
inline void parallel_for_blocks(
    std::size_t count, unsigned threads,
    const std::function<void(std::size_t, std::size_t)>& fn) {
  if (threads == 0) threads = std::thread::hardware_concurrency();
  if (threads <= 1 || count < 2) {
    fn(0, count);
    return;
  }
  threads = static_cast<unsigned>(
      std::min<std::size_t>(threads, count));
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = static_cast<std::size_t>(t) * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, t, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& err : errors) {
    if (err) std::rethrow_exception(err);
  }
}

}  // namespace mmdsel::detail
