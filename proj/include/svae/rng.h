// Copyright (c) 2026 The svae Authors
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

#ifndef SVAE_RNG_H_
#define SVAE_RNG_H_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace svae {

// Seedable generator built on std::mt19937_64. The engine sequence is fixed
// by the standard; the conversions below are implemented here so that
// uniform, integer, and normal draws are identical on every platform.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer on [lo, hi], rejection sampled.
  int64_t UniformInt(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller; no cached second draw.
  double Normal();
  bool Bernoulli(double p) { return Uniform() < p; }

  template <typename It>
  void Shuffle(It first, It last) {
    const int64_t n = last - first;
    for (int64_t i = n - 1; i > 0; --i) {
      const int64_t j = UniformInt(0, i);
      std::swap(first[i], first[j]);
    }
  }

  template <typename T>
  void FillNormal(std::span<T> out, double mean = 0.0, double stddev = 1.0) {
    for (T& v : out) v = static_cast<T>(mean + stddev * Normal());
  }

 private:
  std::mt19937_64 engine_;
};

// Purposes for which a run derives an independent generator.
enum class Stream : uint64_t {
  kInit = 1,
  kDropout = 2,
  kReparam = 3,
  kShuffle = 4,
  kBatch = 5,
  kData = 6,
  kEval = 7,
};

// SplitMix64 finalizer.
uint64_t MixSeed(uint64_t x);

// Seed for an independent stream of `master` keyed by purpose and up to two
// indices (for example the training step and the batch item).
uint64_t DeriveSeed(uint64_t master, Stream purpose, uint64_t a = 0,
                    uint64_t b = 0);
uint64_t DeriveSeed(uint64_t master, std::string_view label, uint64_t a = 0,
                    uint64_t b = 0);

inline Rng MakeStream(uint64_t master, Stream purpose, uint64_t a = 0,
                      uint64_t b = 0) {
  return Rng(DeriveSeed(master, purpose, a, b));
}

}  // namespace svae

#endif  // SVAE_RNG_H_
