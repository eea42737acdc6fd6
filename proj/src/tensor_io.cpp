#include "mrshift/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "mrshift/error.hpp"

namespace mrshift {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view b, std::size_t pos, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_mrt1(const Tensor& t) {
  if (t.rank() > 255) throw ShapeError("mrt1: rank exceeds 255");
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(t.dtype()));
  out.push_back(static_cast<char>(t.rank()));
  for (auto d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("mrt1: extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  const std::size_t width = t.is_complex() ? 16 : 8;
  out.reserve(out.size() + t.size() * width);
  if (t.is_complex()) {
    for (auto z : t.cvalues()) {
      put_f64(out, z.real());
      put_f64(out, z.imag());
    }
  } else {
    for (auto v : t.values()) put_f64(out, v);
  }
  return out;
}

Tensor decode_mrt1(std::string_view b) {
  if (b.size() < 6 || std::memcmp(b.data(), kMagic, 4) != 0)
    throw FormatError("mrt1: bad magic");
  const auto code = static_cast<unsigned char>(b[4]);
  if (code > 1) throw FormatError("mrt1: unknown dtype code " + std::to_string(code));
  const std::size_t ndim = static_cast<unsigned char>(b[5]);
  std::size_t pos = 6;
  if (b.size() < pos + 4 * ndim) throw FormatError("mrt1: truncated header");
  Shape dims(ndim);
  for (auto& d : dims) {
    d = static_cast<std::size_t>(get_le(b, pos, 4));
    pos += 4;
  }
  const std::size_t n = shape_numel(dims);
  const std::size_t width = code == 1 ? 16 : 8;
  if (b.size() - pos != n * width)
    throw FormatError("mrt1: payload holds " + std::to_string(b.size() - pos) + " bytes, expected " +
                      std::to_string(n * width));
  if (code == 1) {
    std::vector<cplx> v(n);
    for (auto& z : v) {
      const double re = std::bit_cast<double>(get_le(b, pos, 8));
      const double im = std::bit_cast<double>(get_le(b, pos + 8, 8));
      z = {re, im};
      pos += 16;
    }
    return Tensor(std::move(dims), std::move(v));
  }
  std::vector<double> v(n);
  for (auto& x : v) {
    x = std::bit_cast<double>(get_le(b, pos, 8));
    pos += 8;
  }
  return Tensor(std::move(dims), std::move(v));
}

void save_mrt1(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("mrt1: cannot open " + path.string() + " for writing");
  const std::string bytes = encode_mrt1(t);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("mrt1: write failed for " + path.string());
}

Tensor load_mrt1(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("mrt1: missing file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_mrt1(bytes);
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + " (" + path.string() + ")");
  }
}

}  // namespace mrshift
