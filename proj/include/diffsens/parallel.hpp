#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

#include <Eigen/Core>

namespace diffsens {

// Splits [0, rows) into at most `workers` contiguous shards and runs
// fn(begin, end) on each, one thread per shard. The first exception thrown by
// any shard is rethrown after all shards finish.
template <class Fn>
void for_each_shard(Eigen::Index rows, std::size_t workers, Fn&& fn) {
  const auto n = static_cast<std::size_t>(rows);
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    fn(Eigen::Index{0}, rows);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const auto begin = static_cast<Eigen::Index>(n * w / workers);
    const auto end = static_cast<Eigen::Index>(n * (w + 1) / workers);
    threads.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace diffsens
