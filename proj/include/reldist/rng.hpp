// Copyright 2026 The reldist Authors
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

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace reldist {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based generator. A stream is identified by its key; the n-th draw
/// is a pure function of (key, n), so streams can be split and replayed
/// without sharing state between workers.
class RngStream {
 public:
  constexpr explicit RngStream(std::uint64_t key = 0) noexcept : key_(mix64(key)) {}

  /// Derives an independent child stream. Children of the same parent with
  /// different tags never share a key (up to 64-bit hash collisions).
  constexpr RngStream split(std::uint64_t tag) const noexcept {
    RngStream child;
    child.key_ = mix64(key_ ^ mix64(tag ^ 0xD1B54A32D192ED03ULL));
    return child;
  }

  constexpr RngStream split(std::initializer_list<std::uint64_t> tags) const noexcept {
    RngStream s = *this;
    for (auto t : tags) s = s.split(t);
    return s;
  }

  constexpr std::uint64_t next_u64() noexcept { return mix64(key_ + 0x632BE59BD9B4E019ULL * (++counter_)); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t limit = (~std::uint64_t{0} - n + 1) % n;
    for (;;) {
      const std::uint64_t x = next_u64();
      if (x >= limit) return x % n;
    }
  }

  /// Standard normal via Box-Muller (one value per call; the pair partner is dropped
  /// so that draws stay a function of the counter alone).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Stable 64-bit tag from a short string, for naming streams ("rollout", "eval", ...).
constexpr std::uint64_t tag_of(const char* s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (; *s != '\0'; ++s) {
    h ^= static_cast<unsigned char>(*s);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace reldist
