#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace mammofuse {

using Rng = std::mt19937_64;

/// Independent stream for a tuple of integer keys, e.g. (seed, epoch, index).
/// The same keys always give the same stream.
inline Rng derive_rng(std::initializer_list<std::uint64_t> keys) {
  std::seed_seq::result_type words[16] = {};
  int n = 0;
  for (auto k : keys) {
    if (n + 2 > 16) break;
    words[n++] = static_cast<std::seed_seq::result_type>(k & 0xffffffffu);
    words[n++] = static_cast<std::seed_seq::result_type>(k >> 32);
  }
  std::seed_seq seq(words, words + n);
  return Rng(seq);
}

/// Uniform draw in [0, 1). Implemented directly on the 64-bit output so the
/// value sequence does not depend on the standard library's distributions.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [lo, hi] (inclusive).
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return lo + static_cast<std::int64_t>(rng());
  // rejection sampling removes modulo bias
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return lo + static_cast<std::int64_t>(r % span);
}

/// Fisher-Yates shuffle on top of uniform_int, so permutations are stable
/// across standard library implementations.
template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng) {
  const auto n = last - first;
  for (auto i = n - 1; i > 0; --i) {
    const auto j = uniform_int(rng, 0, i);
    std::iter_swap(first + i, first + j);
  }
}

}  // namespace mammofuse
