#pragma once

#include <cmath>
#include <numbers>

#include "mrshift/rng.hpp"
#include "mrshift/tensor.hpp"

namespace testing {

using mrshift::cplx;
using mrshift::Rng;
using mrshift::Shape;
using mrshift::Tensor;

inline Tensor random_real(Shape dims, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(dims));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline Tensor random_normal(Shape dims, std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(dims));
  for (auto& v : t.values()) v = mean + sd * rng.normal();
  return t;
}

inline Tensor random_complex(Shape dims, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(dims), mrshift::DType::Complex128);
  for (auto& v : t.cvalues()) v = cplx(rng.normal(), rng.normal());
  return t;
}

// Textbook O(H^2 W^2) orthonormal DFT.
inline Tensor naive_dft2(const Tensor& x, bool inverse = false) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  const Tensor in = x.is_complex() ? x : x.to_complex();
  Tensor out({h, w}, mrshift::DType::Complex128);
  const double sign = inverse ? 1.0 : -1.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  auto src = in.cvalues();
  auto dst = out.cvalues();
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      cplx acc = 0;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          const double ph = sign * 2.0 * std::numbers::pi *
                            (static_cast<double>(u * r) / static_cast<double>(h) +
                             static_cast<double>(v * c) / static_cast<double>(w));
          acc += src[r * w + c] * cplx(std::cos(ph), std::sin(ph));
        }
      dst[u * w + v] = acc * scale;
    }
  return out;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace testing
