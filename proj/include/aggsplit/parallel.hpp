#ifndef AGGSPLIT_PARALLEL_HPP
#define AGGSPLIT_PARALLEL_HPP

#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace aggsplit {

/// Fixed worker pool for phase-parallel loops. Each index is handled by
/// exactly one task and tasks write only their own slots, so results do not
/// depend on the thread count.
class WorkerPool {
 public:
  /// threads == 0 runs every loop inline on the caller.
  explicit WorkerPool(int threads = 0);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  int threads() const { return static_cast<int>(workers_.size()); }

  /// Runs fn(0..count−1) and returns once all calls finished. The first
  /// exception thrown by any task is rethrown here.
  void parallel_for(int count, const std::function<void(int)>& fn);

 private:
  void worker_loop();

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(int)>* job_ = nullptr;
  int count_ = 0;
  int next_ = 0;
  int active_ = 0;
  unsigned generation_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

/// Thread count from AGGSPLIT_THREADS (unset or invalid means 0).
int threads_from_env();

}  // namespace aggsplit

#endif  // AGGSPLIT_PARALLEL_HPP
