// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace factorforge {

/// Thread count used by the kernels when the caller passes 0.
/// FACTORFORGE_THREADS caps the hardware concurrency.
inline std::size_t default_threads() {
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FACTORFORGE_THREADS")) {
    try {
      long cap = std::stol(env);
      if (cap >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(cap));
    } catch (...) {
      // unparsable value: ignore the cap
    }
  }
  return hw;
}

inline std::size_t resolve_threads(std::size_t requested) {
  return requested == 0 ? default_threads() : requested;
}

/// Splits [0, n) into at most `threads` contiguous chunks and runs
/// fn(chunk, begin, end) for each. Chunk boundaries depend only on n and the
/// chunk count, so reductions done in chunk order are reproducible.
template <class Fn>
std::size_t parallel_chunks(std::size_t n, std::size_t threads, Fn&& fn) {
  const std::size_t chunks = std::max<std::size_t>(1, std::min(threads, n));
  if (chunks == 1) {
    fn(std::size_t{0}, std::size_t{0}, n);
    return 1;
  }
  std::vector<std::thread> pool;
  pool.reserve(chunks - 1);
  auto bounds = [&](std::size_t c) { return n * c / chunks; };
  for (std::size_t c = 1; c < chunks; ++c)
    pool.emplace_back([&, c] { fn(c, bounds(c), bounds(c + 1)); });
  fn(std::size_t{0}, bounds(0), bounds(1));
  for (auto& t : pool) t.join();
  return chunks;
}

}  // namespace factorforge
