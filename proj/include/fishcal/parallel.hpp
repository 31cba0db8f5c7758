#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace fishcal {

/// Runs fn(i) for i in [0, n) across up to `threads` workers (0 = hardware
/// concurrency). Work is sharded by index so results must be written to
/// per-index slots; ordering across indices is not observable.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned threads = 0) {
  if (n == 0) return;
  unsigned hw = threads ? threads : std::thread::hardware_concurrency();
  if (hw < 1) hw = 1;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(hw, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([=, &fn] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace fishcal
