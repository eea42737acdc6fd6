#include "mrshift/rng.hpp"

#include <bit>
#include <cmath>

#include "mrshift/error.hpp"

namespace mrshift {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& word : s_) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    word = z ^ (z >> 31);
  }
}

Rng Rng::child(std::uint64_t index) const {
  return Rng(splitmix64(seed_ ^ splitmix64(index + 1)));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = std::rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
  if (lo > hi) throw ParamError("rng uniform: lo > hi");
  return lo + (hi - lo) * uniform();
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw ParamError("rng uniform_int: lo > hi");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo);
  if (span == ~0ULL) return static_cast<std::int64_t>(next_u64());
  const std::uint64_t range = span + 1;
  const std::uint64_t mask = std::bit_ceil(range) - 1;
  for (;;) {
    const std::uint64_t v = next_u64() & mask;
    if (v < range) return lo + static_cast<std::int64_t>(v);
  }
}

double Rng::normal() {
  if (spare_normal_) {
    const double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  for (;;) {
    const double u = 2.0 * uniform() - 1.0;
    const double v = 2.0 * uniform() - 1.0;
    const double s = u * u + v * v;
    if (s >= 1.0 || s == 0.0) continue;
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_normal_ = v * f;
    return u * f;
  }
}

Tensor rng_normal(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return Tensor({n}, std::move(v));
}

Tensor rng_uniform(Rng& rng, double lo, double hi, std::size_t n) {
  if (lo > hi) throw ParamError("rng_uniform: lo > hi");
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor({n}, std::move(v));
}

}  // namespace mrshift
