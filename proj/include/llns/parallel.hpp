#pragma once
// Replica-parallel execution with deterministic aggregation: jobs are grouped
// into fixed-size blocks, each block reduces locally, and block results merge
// in block-index order. The reduced value is bit-identical for any worker
// count, including 1.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace llns {

inline unsigned worker_count() {
  if (const char* env = std::getenv("LLNS_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) return unsigned(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

inline constexpr std::size_t default_block_size = 64;

// work(job_index, block_accumulator) runs for each job; merge(total, block)
// folds finished blocks in index order.
template <class Acc, class Work, class Merge>
Acc run_blocked(std::size_t jobs, std::size_t block_size, const Acc& init,
                Work&& work, Merge&& merge) {
  if (block_size == 0) throw std::invalid_argument("run_blocked: block_size 0");
  const std::size_t blocks = (jobs + block_size - 1) / block_size;
  std::vector<Acc> partial(blocks, init);
  const unsigned workers =
      unsigned(std::min<std::size_t>(worker_count(), blocks ? blocks : 1));

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      std::size_t b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        const std::size_t jo = b * block_size;
        const std::size_t hi = std::min(jobs, jo + block_size);
        for (std::size_t j = jo; j < hi; ++j) work(j, partial[b]);
      } catch (...) {
        std::lock_guard<std::mutex> lk(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(blocks);
        return;
      }
    }
  };

  if (workers <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  Acc total = init;
  for (std::size_t b = 0; b < blocks; ++b) merge(total, partial[b]);
  return total;
}

}  // namespace llns
