#pragma once

// Fixed-size worker pool for index-parallel loops. Each index is processed by
// exactly one worker; callers write results into per-index slots, so nothing
// observable depends on which worker ran what.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace sphmlmc {

class Executor {
 public:
  explicit Executor(int workers = 1) : workers_(workers) {
    if (workers < 1) throw std::invalid_argument("Executor: need at least one worker");
  }

  int workers() const noexcept { return workers_; }

  /// Calls fn(index, worker) for index in [0, n). If calls throw, the exception
  /// of the smallest failing index among those attempted is rethrown.
  template <class Fn>
  void parallel_for(std::size_t n, Fn&& fn) const {
    if (n == 0) return;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mu;
    std::size_t bad_index = std::numeric_limits<std::size_t>::max();
    std::exception_ptr bad;

    auto run = [&](int worker) {
      while (!stop.load(std::memory_order_relaxed)) {
        const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) return;
        try {
          fn(i, worker);
        } catch (...) {
          std::lock_guard lock(mu);
          if (i < bad_index) {
            bad_index = i;
            bad = std::current_exception();
          }
          stop.store(true, std::memory_order_relaxed);
        }
      }
    };

    const int extra = static_cast<int>(std::min<std::size_t>(workers_, n)) - 1;
    std::vector<std::thread> threads;
    threads.reserve(extra);
    for (int w = 1; w <= extra; ++w) threads.emplace_back(run, w);
    run(0);
    for (auto& t : threads) t.join();
    if (bad) std::rethrow_exception(bad);
  }

 private:
  int workers_;
};

}  // namespace sphmlmc
