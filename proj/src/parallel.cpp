#include "aggsplit/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <string>

namespace aggsplit {

WorkerPool::WorkerPool(int threads) {
  for (int t = 0; t < threads; ++t) workers_.emplace_back([this] { worker_loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& w : workers_) w.join();
}

void WorkerPool::parallel_for(int count, const std::function<void(int)>& fn) {
  if (workers_.empty() || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::unique_lock lock(mutex_);
  job_ = &fn;
  count_ = count;
  next_ = 0;
  active_ = 0;
  error_ = nullptr;
  ++generation_;
  wake_.notify_all();
  done_.wait(lock, [this] { return next_ >= count_ && active_ == 0; });
  job_ = nullptr;
  if (error_) std::rethrow_exception(error_);
}

void WorkerPool::worker_loop() {
  unsigned seen = 0;
  std::unique_lock lock(mutex_);
  while (true) {
    wake_.wait(lock, [&] { return stop_ || (generation_ != seen && job_ != nullptr); });
    if (stop_) return;
    seen = generation_;
    while (job_ && next_ < count_) {
      const int i = next_++;
      ++active_;
      const auto* job = job_;
      lock.unlock();
      try {
        (*job)(i);
      } catch (...) {
        std::lock_guard relock(mutex_);
        if (!error_) error_ = std::current_exception();
      }
      lock.lock();
      --active_;
    }
    if (next_ >= count_ && active_ == 0) done_.notify_all();
  }
}

int threads_from_env() {
  const char* v = std::getenv("AGGSPLIT_THREADS");
  if (!v) return 0;
  try {
    const int n = std::stoi(v);
    return n > 0 ? n : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace aggsplit
