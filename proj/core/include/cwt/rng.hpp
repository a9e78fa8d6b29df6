#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace cwt {

/// SplitMix64 generator. Same seed gives the same stream on every platform.
///
/// Parallel consumers never share an Rng; each gets a child from split(), whose
/// stream depends only on (parent state, index).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;

  /// [0, 1) from the high 53 bits of one output.
  double uniform01() noexcept;

  /// [lo, hi); returns lo when lo == hi. Throws if lo > hi.
  double uniform(double lo, double hi);

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Unbiased integer in [lo, hi] (inclusive).
  std::int64_t integer(std::int64_t lo, std::int64_t hi);

  /// Child stream; does not advance this generator.
  Rng split(std::uint64_t index) const noexcept { return split(state_, index); }
  static Rng split(std::uint64_t seed, std::uint64_t index) noexcept;

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// `count` distinct indices from [0, pool), sorted ascending.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t pool, std::size_t count);

}  // namespace cwt
