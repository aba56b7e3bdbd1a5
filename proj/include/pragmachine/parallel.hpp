// Copyright 2026 The Pragmachine Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <vector>

#ifdef PRAGMACHINE_USE_OPENMP
#include <omp.h>
#endif

namespace pragmachine {

// Every per-context kernel has two paths. kSerial is the reference loop the
// tests compare against; kParallel distributes independent items over
// OpenMP threads. Results are written to per-item slots and reduced in
// index order, so both paths are bit-identical.
enum class ExecPolicy { kSerial, kParallel };

void set_num_threads(int n);
int max_threads();

// out[i] = fn(i) for i in [0, n).
template <typename T, typename Fn>
std::vector<T> map_indices(std::size_t n, ExecPolicy policy, Fn&& fn) {
  std::vector<T> out(n);
  if (policy == ExecPolicy::kSerial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
#ifdef PRAGMACHINE_USE_OPENMP
  std::exception_ptr error;
  std::size_t error_index = n;
  std::mutex mu;
  const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      // Rethrow the lowest-index failure so errors match the serial path.
      if (static_cast<std::size_t>(i) < error_index) {
        error_index = static_cast<std::size_t>(i);
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
#else
  for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
#endif
  return out;
}

}  // namespace pragmachine
