#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace kdamp {

/// Worker count: KD_THREADS if set to a positive integer, else the hardware
/// concurrency (at least 1).
inline unsigned workerCount() {
  if (const char* env = std::getenv("KD_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls body(begin, end) on contiguous chunks of [0, n). Chunks are fixed by
/// n and the worker count, so per-chunk work is deterministic.
template <class Body>
void parallelFor(std::size_t n, Body&& body, std::size_t minChunk = 256) {
  const std::size_t workers = std::min<std::size_t>(workerCount(), std::max<std::size_t>(1, n / minChunk));
  if (workers <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk, e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, w, b, e] {
      try {
        body(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace kdamp
