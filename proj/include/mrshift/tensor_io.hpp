#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "mrshift/tensor.hpp"

namespace mrshift {

// MRT1 binary layout (all integers and floats little-endian):
//   bytes 0-3   magic "MRT1"
//   u8          dtype code (0 = real64, 1 = complex128)
//   u8          ndim
//   u32 x ndim  extents
//   payload     row-major doubles; complex values as interleaved (re, im)
std::string encode_mrt1(const Tensor& t);
Tensor decode_mrt1(std::string_view bytes);

void save_mrt1(const Tensor& t, const std::filesystem::path& path);
Tensor load_mrt1(const std::filesystem::path& path);

}  // namespace mrshift
