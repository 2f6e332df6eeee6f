#pragma once

// Fixed-width pool of worker threads with a blocking parallel_for.
//
// The calling thread always takes part in the work, and a parallel_for issued
// from inside one of the pool's own workers runs inline, so nested use cannot
// deadlock. Width 1 spawns no threads at all.

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <queue>
#include <thread>
#include <vector>

namespace seqpar {

class WorkerPool {
 public:
  explicit WorkerPool(std::size_t width);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  [[nodiscard]] std::size_t width() const noexcept { return width_; }

  /// Calls body(i) for every i in [begin, end), split into at most width()
  /// contiguous chunks. Returns once every call has finished. The first
  /// exception thrown by any chunk is rethrown here.
  void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

  /// Width from the SEQPAR_WORKERS environment variable, else hardware
  /// concurrency (at least 1).
  [[nodiscard]] static std::size_t default_width();

 private:
  void worker_loop();

  std::size_t width_;
  std::vector<std::thread> threads_;
  std::queue<std::function<void()>> tasks_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stopping_ = false;
};

/// Runs body over [begin, end) on the pool if one is given, inline otherwise.
void parallel_for(WorkerPool* pool, std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

}  // namespace seqpar
