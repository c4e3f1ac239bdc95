#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

#include "unode/core/error.hpp"

namespace unode {

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
inline constexpr std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                                         std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

}  // namespace detail

/// Counter-based generator. A value is a pure function of (seed, stream, counter), so
/// streams can be forked per sample or per chunk and results do not depend on scheduling.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t counter = 0)
      : seed_(seed), stream_(stream), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  /// Independent child stream; same (parent, child_id) always yields the same child.
  Rng fork(std::uint64_t child_id) const noexcept {
    return Rng(seed_, detail::splitmix64(stream_ ^ detail::splitmix64(child_id + 0x5851F42D4C957F2Dull)));
  }

  /// Raw 128-bit block at a given counter position; does not touch generator state.
  std::array<std::uint32_t, 4> block_at(std::uint64_t counter) const noexcept {
    return detail::philox4x32(
        {static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
  }

  std::uint64_t next_u64() noexcept {
    if (lane_ == 0) {
      block_ = block_at(counter_++);
    }
    const std::uint64_t v = (std::uint64_t{block_[2 * lane_ + 1]} << 32) | block_[2 * lane_];
    lane_ ^= 1;
    return v;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) fail_usage("Rng::below: empty range");
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n + 1) % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v > limit);
    return v % n;
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Standard normal via Box-Muller; pairs are cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  unsigned lane_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace unode
