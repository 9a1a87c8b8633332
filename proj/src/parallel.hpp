#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace quadfield::detail {

// Runs fn(i) for i in [0, n) on up to `threads` workers with a static block
// split. Callers write to per-index slots so results do not depend on timing.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::clamp(threads, 1, std::max(1, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      const int lo = static_cast<int>(static_cast<long>(n) * w / threads);
      const int hi = static_cast<int>(static_cast<long>(n) * (w + 1) / threads);
      try {
        for (int i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace quadfield::detail
