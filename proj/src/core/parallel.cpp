// Copyright 2026 The Lipmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace lipmark {
namespace {

std::atomic<int> g_threads{1};

// Set while a thread is executing pool work; nested parallel_for calls from
// inside a job run inline over their own range instead of re-dispatching.
thread_local bool t_in_worker = false;

// Lazily grown pool; every pool thread participates in a wake/done barrier
// per job, so no job can observe a straggler from the previous one.
class Pool {
 public:
  static Pool& instance() {
    static Pool* pool = new Pool();  // leaked on purpose: workers never join
    return *pool;
  }

  void run(int64_t n, int workers, const std::function<void(int64_t, int64_t)>& fn) {
    ensure_workers(workers - 1);
    int pool_size;
    {
      std::unique_lock<std::mutex> lock(mu_);
      pool_size = static_cast<int>(threads_.size());
      job_fn_ = &fn;
      job_n_ = n;
      job_workers_ = workers;
      job_done_ = 0;
      ++job_id_;
    }
    cv_work_.notify_all();
    t_in_worker = true;
    work_one(0, n, workers, fn);  // caller acts as worker 0
    t_in_worker = false;
    std::unique_lock<std::mutex> lock(mu_);
    cv_done_.wait(lock, [&] { return job_done_ == pool_size; });
    job_fn_ = nullptr;
  }

 private:
  Pool() = default;

  void ensure_workers(int needed) {
    std::unique_lock<std::mutex> lock(mu_);
    while (static_cast<int>(threads_.size()) < needed) {
      int index = static_cast<int>(threads_.size()) + 1;
      threads_.emplace_back([this, index] { worker_loop(index); });
      threads_.back().detach();
    }
  }

  void worker_loop(int index) {
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(int64_t, int64_t)>* fn = nullptr;
      int64_t n = 0;
      int workers = 0;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_work_.wait(lock, [&] { return job_id_ != seen; });
        seen = job_id_;
        fn = job_fn_;
        n = job_n_;
        workers = job_workers_;
      }
      if (fn != nullptr && index < workers) {
        t_in_worker = true;
        work_one(index, n, workers, *fn);
        t_in_worker = false;
      }
      {
        std::unique_lock<std::mutex> lock(mu_);
        ++job_done_;
      }
      cv_done_.notify_all();
    }
  }

  static void work_one(int index, int64_t n, int workers,
                       const std::function<void(int64_t, int64_t)>& fn) {
    int64_t chunk = (n + workers - 1) / workers;
    int64_t begin = static_cast<int64_t>(index) * chunk;
    int64_t end = std::min<int64_t>(n, begin + chunk);
    if (begin < end) fn(begin, end);
  }

  std::mutex mu_;
  std::condition_variable cv_work_;
  std::condition_variable cv_done_;
  std::vector<std::thread> threads_;
  const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
  int64_t job_n_ = 0;
  int job_workers_ = 1;
  int job_done_ = 0;
  uint64_t job_id_ = 0;
};

}  // namespace

void set_thread_count(int n) { g_threads.store(n < 1 ? 1 : n); }

int thread_count() { return g_threads.load(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = g_threads.load();
  if (workers > n) workers = static_cast<int>(n);
  // tiny jobs are cheaper inline than a pool round trip; the partitioning
  // never changes computed values, only who computes them
  if (workers <= 1 || t_in_worker || n < 512) {
    fn(0, n);
    return;
  }
  Pool::instance().run(n, workers, fn);
}

}  // namespace lipmark
