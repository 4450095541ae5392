// Copyright 2026 The fedliab Authors. All Rights Reserved.
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
// =============================================================================

#ifndef FEDLIAB_UTIL_RANDOM_H_
#define FEDLIAB_UTIL_RANDOM_H_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>

namespace fedliab {

// SplitMix64 finalizer.
constexpr std::uint64_t Mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Folds a seed and any number of tags (node id, epoch, layer, ...) into one
// stream key. Different tag tuples give statistically independent streams.
constexpr std::uint64_t StreamKey(std::uint64_t seed,
                                  std::initializer_list<std::uint64_t> tags) {
  std::uint64_t key = Mix64(seed);
  for (std::uint64_t t : tags) key = Mix64(key ^ Mix64(t + 0x632be59bd9b4e019ULL));
  return key;
}

// Counter-based generator: the i-th draw of a stream is a pure function of
// (key, i), so results never depend on how many other streams were consumed.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  std::uint64_t NextU64() { return Mix64(key_ ^ Mix64(counter_++)); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double NextUniform() { return static_cast<double>(NextU64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes exactly two counters.
  double NextNormal();

  // Uniform integer in [0, bound); bound must be positive.
  std::uint64_t NextBelow(std::uint64_t bound);

  template <typename T>
  void Shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(NextBelow(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace fedliab

#endif  // FEDLIAB_UTIL_RANDOM_H_
