// Copyright 2026 The qkd2way Authors
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

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace qkd2way {

/// SplitMix64 finalizer. Used to mix seeds, never as a stream generator.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Derives an independent sub-stream seed from (seed, tag, index).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0) noexcept {
    return splitmix64(seed ^ splitmix64(tag ^ splitmix64(index + 0x632BE59BD9B4E019ULL)));
}

/// Deterministic generator. Every draw is defined bit-exactly here rather than
/// through <random> distributions, whose outputs differ between standard
/// library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t x = engine_();
            if (x >= threshold) {
                return x % n;
            }
        }
    }

    bool bit() { return (engine_() >> 63) != 0; }

  private:
    std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle driven by Rng::below.
template <typename T>
void shuffle(std::span<T> values, Rng& rng) {
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(values[i - 1], values[j]);
    }
}

/// Uniform random permutation of [0, n).
inline std::vector<std::uint32_t> random_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::uint32_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::uint32_t{0});
    Rng rng(seed);
    shuffle(std::span<std::uint32_t>(perm), rng);
    return perm;
}

/// First `count` entries of a uniformly random permutation of [0, n): a uniform
/// random ordered sample without replacement. Costs O(n) memory, O(count) draws.
inline std::vector<std::uint32_t> random_sample(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<std::uint32_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::uint32_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < count && i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(std::min(count, n));
    return pool;
}

}  // namespace qkd2way
