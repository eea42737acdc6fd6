#include "mrshift/fft.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <vector>

#include "mrshift/error.hpp"

namespace mrshift {

namespace {

void radix2(std::span<cplx> a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    // Twiddles are evaluated directly rather than by recurrence to keep
    // round-off at the 1e-15 level for every stage.
    std::vector<cplx> tw(half);
    for (std::size_t k = 0; k < half; ++k) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(len);
      tw[k] = {std::cos(ang), std::sin(ang)};
    }
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + half] * tw[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

void bluestein(std::span<cplx> a, bool inverse) {
  const std::size_t n = a.size();
  const std::size_t m = std::bit_ceil(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;

  // chirp[k] = exp(sign * i*pi*k^2/n); k^2 reduced mod 2n to keep the angle small.
  std::vector<cplx> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp[k] = {std::cos(ang), std::sin(ang)};
  }

  std::vector<cplx> x(m), y(m);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  y[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);

  radix2(x, false);
  radix2(y, false);
  for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
  radix2(x, true);

  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * inv_m * chirp[k];
}

void check_image(const Tensor& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.dims()));
  if (t.dim(0) < 2 || t.dim(1) < 2)
    throw ShapeError(std::string(op) + ": both extents must be >= 2, got " + shape_str(t.dims()));
}

Tensor transform2(const Tensor& in, bool inverse) {
  Tensor out = in.to_complex();
  const std::size_t h = out.dim(0), w = out.dim(1);
  auto data = out.cvalues();

  for (std::size_t r = 0; r < h; ++r) fft1d(data.subspan(r * w, w), inverse);

  std::vector<cplx> col(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) col[r] = data[r * w + c];
    fft1d(col, inverse);
    for (std::size_t r = 0; r < h; ++r) data[r * w + c] = col[r];
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (auto& v : data) v *= scale;
  return out;
}

Tensor roll2(const Tensor& t, std::size_t dr, std::size_t dc) {
  const std::size_t h = t.dim(0), w = t.dim(1);
  Tensor out(t.dims(), t.dtype());
  if (t.is_complex()) {
    auto src = t.cvalues();
    auto dst = out.cvalues();
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) dst[((r + dr) % h) * w + (c + dc) % w] = src[r * w + c];
  } else {
    auto src = t.values();
    auto dst = out.values();
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) dst[((r + dr) % h) * w + (c + dc) % w] = src[r * w + c];
  }
  return out;
}

}  // namespace

void fft1d(std::span<cplx> data, bool inverse) {
  if (data.size() <= 1) return;
  if (std::has_single_bit(data.size()))
    radix2(data, inverse);
  else
    bluestein(data, inverse);
}

Tensor fft2(const Tensor& image) {
  check_image(image, "fft2");
  return transform2(image, false);
}

Tensor ifft2(const Tensor& spectrum) {
  check_image(spectrum, "ifft2");
  return transform2(spectrum, true);
}

Tensor fftshift(const Tensor& t) {
  check_image(t, "fftshift");
  return roll2(t, t.dim(0) / 2, t.dim(1) / 2);
}

Tensor ifftshift(const Tensor& t) {
  check_image(t, "ifftshift");
  const std::size_t h = t.dim(0), w = t.dim(1);
  return roll2(t, h - h / 2, w - w / 2);
}

}  // namespace mrshift
