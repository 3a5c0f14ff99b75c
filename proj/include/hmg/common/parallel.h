// Copyright 2026 The HMG Authors
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

#ifndef HMG_COMMON_PARALLEL_H_
#define HMG_COMMON_PARALLEL_H_

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace hmg {

// Calls fn(i) for i in [0, count) on up to `jobs` threads. Work is claimed
// dynamically; the lowest-index failure is rethrown after all threads join.
template <typename Fn>
void ParallelFor(size_t count, int jobs, Fn&& fn) {
  const size_t width = std::min(count, static_cast<size_t>(std::max(1, jobs)));
  std::vector<std::exception_ptr> errors(count);
  if (width <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> threads;
  for (size_t w = 0; w < width; ++w) {
    threads.emplace_back([&] {
      for (size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace hmg

#endif  // HMG_COMMON_PARALLEL_H_
