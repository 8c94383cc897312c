#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace stvrecon {

/// Number of worker threads for internal loops. Honors STVRECON_THREADS when
/// set to a positive integer, otherwise uses the hardware concurrency.
inline std::size_t thread_count() {
  if (const char *env = std::getenv("STVRECON_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0)
        return static_cast<std::size_t>(n);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(begin, end) over [0, n) split into contiguous blocks. Each block
/// must write to disjoint output, so the result never depends on the number
/// of threads.
template <class Fn> void parallel_for(std::size_t n, Fn &&fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t block = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * block;
    const std::size_t e = std::min(n, b + block);
    if (b >= e)
      break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto &t : pool)
    t.join();
}

} // namespace stvrecon
