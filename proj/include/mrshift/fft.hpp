#pragma once

#include <span>

#include "mrshift/tensor.hpp"

namespace mrshift {

// Unscaled in-place 1-D DFT. Power-of-two lengths use an iterative radix-2
// transform; every other length goes through Bluestein's chirp-z algorithm.
// `inverse` flips the sign of the exponent only.
void fft1d(std::span<cplx> data, bool inverse);

// Orthonormal 2-D DFT of an H x W tensor (H, W >= 2): each axis is scaled by
// 1/sqrt(n) so that ifft2(fft2(x)) == x and Parseval holds exactly.
Tensor fft2(const Tensor& image);
Tensor ifft2(const Tensor& spectrum);

// Circular shifts moving DC between (0, 0) and (floor(H/2), floor(W/2)).
Tensor fftshift(const Tensor& t);
Tensor ifftshift(const Tensor& t);

}  // namespace mrshift
