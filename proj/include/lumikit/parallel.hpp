// Copyright Contributors to the lumikit Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace lumikit {

inline int& thread_count_ref() {
  static int count = [] {
    if (const char* env = std::getenv("LUMIKIT_THREADS")) {
      int n = std::atoi(env);
      if (n > 0) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
  }();
  return count;
}

inline void set_thread_count(int n) {
  if (n > 0) thread_count_ref() = n;
}

inline int thread_count() { return thread_count_ref(); }

// Runs func(i) for i in [0, n). Work is split into a fixed number of chunks
// independent of the thread count, so chunk-local accumulation merged in
// chunk order gives bit-identical results for any number of workers.
constexpr int kParallelChunks = 64;

template <typename Func>
inline void parallel_for(int64_t n, Func&& func) {
  int workers = thread_count();
  if (n <= 0) return;
  if (workers <= 1 || n < 256) {
    for (int64_t i = 0; i < n; ++i) func(i);
    return;
  }
  std::atomic<int> next_chunk{0};
  int chunks = kParallelChunks;
  int64_t chunk_size = (n + chunks - 1) / chunks;
  auto worker = [&] {
    while (true) {
      int c = next_chunk.fetch_add(1);
      if (c >= chunks) break;
      int64_t lo = c * chunk_size;
      int64_t hi = std::min<int64_t>(n, lo + chunk_size);
      for (int64_t i = lo; i < hi; ++i) func(i);
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (int t = 0; t < workers - 1; ++t) threads.emplace_back(worker);
  worker();
  for (auto& th : threads) th.join();
}

// Chunked variant for reductions: func(chunk_index, i) accumulates into a
// per-chunk buffer owned by the caller; the caller merges buffers in chunk
// order afterward. The chunk assignment depends only on n.
template <typename Func>
inline void parallel_for_chunked(int64_t n, Func&& func) {
  if (n <= 0) return;
  int chunks = kParallelChunks;
  int64_t chunk_size = (n + chunks - 1) / chunks;
  int workers = thread_count();
  if (workers <= 1 || n < 256) {
    for (int c = 0; c < chunks; ++c) {
      int64_t lo = c * chunk_size;
      int64_t hi = std::min<int64_t>(n, lo + chunk_size);
      for (int64_t i = lo; i < hi; ++i) func(c, i);
    }
    return;
  }
  std::atomic<int> next_chunk{0};
  auto worker = [&] {
    while (true) {
      int c = next_chunk.fetch_add(1);
      if (c >= chunks) break;
      int64_t lo = c * chunk_size;
      int64_t hi = std::min<int64_t>(n, lo + chunk_size);
      for (int64_t i = lo; i < hi; ++i) func(c, i);
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (int t = 0; t < workers - 1; ++t) threads.emplace_back(worker);
  worker();
  for (auto& th : threads) th.join();
}

}  // namespace lumikit
