// Copyright 2026 CCOP Authors
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

#ifndef CCOP_RNG_HPP_
#define CCOP_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

namespace ccop {

// Seed derivation and distributions are hand-rolled so that replay is
// bit-identical: std:: distributions are implementation-defined, the
// mt19937_64 engine itself is not.

uint64_t splitmix64(uint64_t x);

/// Stable 64-bit hash of a tag string (FNV-1a).
uint64_t hash_tag(std::string_view tag);

/// Derives an independent stream seed from (seed, tag, index).
uint64_t derive_seed(uint64_t seed, std::string_view tag, uint64_t index);

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Requires n > 0.
  uint64_t uniform_index(uint64_t n);

  /// Standard normal via Box-Muller (no cached spare, keeps replay simple).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ccop

#endif  // CCOP_RNG_HPP_
