#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

#include "mrshift/tensor.hpp"

namespace mrshift {

// Deterministic random source: xoshiro256** with its 256-bit state filled
// from the 64-bit seed by SplitMix64.
//
//  - uniform():      53 high bits of the next output scaled to [0, 1).
//  - normal():       Marsaglia polar method; the second variate of each
//                    accepted pair is cached and returned by the next call.
//  - uniform_int():  rejection sampling over the smallest covering power of two.
//  - child(i):       a new Rng seeded with SplitMix64(seed ^ SplitMix64(i + 1)),
//                    independent of how far the parent has advanced.
//
// An Rng has a single owner; pass children to concurrent jobs.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "xoshiro256**/splitmix64";

  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  Rng child(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi);
  // Inclusive range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x);

Tensor rng_normal(Rng& rng, std::size_t n);
Tensor rng_uniform(Rng& rng, double lo, double hi, std::size_t n);

}  // namespace mrshift
