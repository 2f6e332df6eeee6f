#include "seqpar/worker_pool.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>

namespace seqpar {

namespace {
thread_local const WorkerPool* current_pool = nullptr;
}

WorkerPool::WorkerPool(std::size_t width) : width_(std::max<std::size_t>(width, 1)) {
  threads_.reserve(width_ - 1);
  for (std::size_t i = 0; i + 1 < width_; ++i) {
    threads_.emplace_back([this] { worker_loop(); });
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::worker_loop() {
  current_pool = this;
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [this] { return stopping_ || !tasks_.empty(); });
      if (stopping_ && tasks_.empty()) return;
      task = std::move(tasks_.front());
      tasks_.pop();
    }
    task();
  }
}

void WorkerPool::parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  const std::size_t chunks = std::min(width_, n);
  if (chunks <= 1 || current_pool == this) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }

  std::size_t remaining = chunks;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::mutex done_mutex;
  std::condition_variable done_cv;

  auto run_chunk = [&](std::size_t c) {
    const std::size_t lo = begin + n * c / chunks;
    const std::size_t hi = begin + n * (c + 1) / chunks;
    try {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
    std::lock_guard lock(done_mutex);
    if (--remaining == 0) done_cv.notify_one();
  };

  {
    std::lock_guard lock(mutex_);
    for (std::size_t c = 1; c < chunks; ++c) tasks_.emplace([&run_chunk, c] { run_chunk(c); });
  }
  cv_.notify_all();
  run_chunk(0);

  std::unique_lock lock(done_mutex);
  done_cv.wait(lock, [&] { return remaining == 0; });
  if (failure) std::rethrow_exception(failure);
}

std::size_t WorkerPool::default_width() {
  if (const char* env = std::getenv("SEQPAR_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(std::thread::hardware_concurrency(), 1);
}

void parallel_for(WorkerPool* pool, std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body) {
  if (pool != nullptr) {
    pool->parallel_for(begin, end, body);
    return;
  }
  for (std::size_t i = begin; i < end; ++i) body(i);
}

}  // namespace seqpar
