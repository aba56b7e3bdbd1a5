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

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace pragmachine {

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a parent seed and a label/index.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index = 0);

// mt19937_64 with distribution code written out here: the std::
// distributions are implementation-defined and would break bit-identical
// reruns across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform on the open interval (0, 1).
  double uniform_open();
  // Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform_open();
  }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform_open() < p; }
  // Index drawn proportionally to nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// FNV-1a, used for content hashes in manifests and vocab fingerprints.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t h = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

}  // namespace pragmachine
