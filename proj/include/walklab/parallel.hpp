#ifndef WALKLAB_PARALLEL_HPP
#define WALKLAB_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <type_traits>
#include <vector>

#include "walklab/random.hpp"

namespace walklab {

/// Runs fn(r) for r in [0, count) on `workers` threads and returns the
/// results in replicate order. Work is handed out in small chunks from a
/// shared counter; the output slot of each replicate is fixed, so the result
/// does not depend on the worker count. The first exception is rethrown
/// after all threads have joined.
template <typename Fn>
auto parallel_map(std::size_t count, int workers, Fn&& fn) {
  using T = std::invoke_result_t<Fn&, std::size_t>;
  std::vector<T> out(count);
  const std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), std::max<std::size_t>(count, 1));
  if (threads <= 1) {
    for (std::size_t r = 0; r < count; ++r) out[r] = fn(r);
    return out;
  }
  const std::size_t chunk = std::max<std::size_t>(1, count / (threads * 16));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t lo = next.fetch_add(chunk);
      if (lo >= count || stop.load()) return;
      const std::size_t hi = std::min(count, lo + chunk);
      try {
        for (std::size_t r = lo; r < hi; ++r) out[r] = fn(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        stop = true;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

/// parallel_map with a replicate generator Rng(replicate_seed(seed, r)).
template <typename Fn>
auto parallel_replicates(std::size_t count, int workers, std::uint64_t seed, Fn&& fn) {
  return parallel_map(count, workers, [&](std::size_t r) {
    Rng rng(replicate_seed(seed, r));
    return fn(r, rng);
  });
}

}  // namespace walklab

#endif  // WALKLAB_PARALLEL_HPP
