#include "cwt/tensor.hpp"

#include "cwt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cwt {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw std::invalid_argument("tensor rank must be 1..4, got shape " + to_string(shape));
  }
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("zero-sized dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() noexcept {
  state_ += 0x9E3779B97F4A7C15ULL;
  return mix64(state_);
}

double Rng::uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("uniform: lo > hi");
  if (lo == hi) return lo;
  const double v = lo + uniform01() * (hi - lo);
  // lo + u*(hi-lo) can round up to hi.
  return v < hi ? v : std::nextafter(hi, lo);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below: empty range");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

std::int64_t Rng::integer(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw std::invalid_argument("integer: lo > hi");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  return lo + static_cast<std::int64_t>(below(span));
}

Rng Rng::split(std::uint64_t seed, std::uint64_t index) noexcept {
  return Rng(mix64(mix64(seed) + 0xD1B54A32D192ED03ULL * (index + 1)));
}

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t pool, std::size_t count) {
  if (count > pool) {
    throw std::invalid_argument("cannot sample " + std::to_string(count) + " of " + std::to_string(pool));
  }
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // partial Fisher-Yates
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace cwt
