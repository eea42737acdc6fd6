#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "mrshift/error.hpp"
#include "mrshift/fft.hpp"
#include "mrshift/rng.hpp"
#include "mrshift/tensor.hpp"
#include "mrshift/tensor_io.hpp"

using namespace mrshift;
using namespace testing;

TEST_CASE("tensor construction and shape checks") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  for (double v : t.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.cvalues(), ShapeError);
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
  CHECK(t.reshaped({3, 2}).dims() == Shape{3, 2});
  Tensor z({0, 4});
  CHECK(z.empty());
  CHECK_THROWS_AS(t + Tensor({3, 2}), ShapeError);
}

TEST_CASE("tensor arithmetic") {
  Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor b({2, 2}, std::vector<double>{4, 3, 2, 1});
  Tensor s = a + b;
  for (double v : s.values()) CHECK(v == 5.0);
  Tensor d = 2.0 * a - b;
  CHECK(d.values()[0] == -2.0);
  CHECK(d.values()[3] == 7.0);
  CHECK(a.sum_sq() == 30.0);
  CHECK(b.max_abs() == 4.0);
  CHECK(max_abs_diff(a, a) == 0.0);
  CHECK(a.identical(Tensor({2, 2}, std::vector<double>{1, 2, 3, 4})));
  CHECK_FALSE(a.identical(b));
}

TEST_CASE("magnitude") {
  Tensor c({1, 2}, std::vector<cplx>{cplx(3, 4), cplx(0, 0)});
  Tensor m = magnitude(c);
  CHECK_FALSE(m.is_complex());
  CHECK(m.values()[0] == 5.0);
  CHECK(m.values()[1] == 0.0);
  CHECK_THROWS_AS(magnitude(Tensor({2, 2})), ShapeError);
}

TEST_CASE("fft2 of a constant image has only a DC bin") {
  const double c = 0.7;
  Tensor x = Tensor::full({4, 4}, c);
  Tensor X = fft2(x);
  auto v = X.cvalues();
  CHECK(std::abs(v[0] - cplx(4 * c, 0)) < 1e-12);
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(std::abs(v[i]) < 1e-12);
}

TEST_CASE("fft2 matches the textbook DFT on power-of-two and other sizes") {
  const std::vector<Shape> shapes = {{2, 2}, {8, 8}, {4, 16}, {5, 6}, {10, 12}, {7, 3}, {9, 20}};
  std::uint64_t seed = 1;
  for (const auto& s : shapes) {
    CAPTURE(shape_str(s));
    Tensor x = random_complex(s, seed++);
    CHECK(max_abs_diff(fft2(x), naive_dft2(x)) < 1e-10);
    CHECK(max_abs_diff(ifft2(x), naive_dft2(x, true)) < 1e-10);
  }
}

TEST_CASE("fft1d handles length 320 through Bluestein") {
  Rng rng(3);
  std::vector<cplx> a(320);
  for (auto& z : a) z = cplx(rng.normal(), rng.normal());
  std::vector<cplx> b = a;
  fft1d(b, false);
  // direct sum for a few bins
  for (std::size_t k : {0u, 1u, 17u, 160u, 319u}) {
    cplx acc = 0;
    for (std::size_t n = 0; n < a.size(); ++n)
      acc += a[n] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * n) / 320.0);
    CHECK(std::abs(acc - b[k]) < 1e-9);
  }
  fft1d(b, true);
  for (std::size_t n = 0; n < a.size(); ++n) CHECK(std::abs(b[n] / 320.0 - a[n]) < 1e-12);
}

TEST_CASE("fft2 inverse identity and Parseval") {
  Tensor x = random_real({64, 64}, 11, -1, 1);
  CHECK(max_abs_diff(ifft2(fft2(x)), x.to_complex()) < 1e-9);
  Tensor y = random_real({32, 32}, 12, -1, 1);
  const Tensor Y = fft2(y);
  double ey = y.sum_sq(), eY = 0;
  for (auto z : Y.cvalues()) eY += std::norm(z);
  CHECK(rel_diff(ey, eY) < 1e-9);
  Tensor odd = random_real({15, 24}, 13);
  CHECK(max_abs_diff(ifft2(fft2(odd)), odd.to_complex()) < 1e-9);
}

TEST_CASE("fft2 linearity") {
  Tensor x = random_complex({16, 16}, 21), y = random_complex({16, 16}, 22);
  const cplx a(0.3, -1.2), b(2.0, 0.5);
  Tensor lhs = fft2(x * a + y * b);
  Tensor rhs = fft2(x) * a + fft2(y) * b;
  CHECK(max_abs_diff(lhs, rhs) < 1e-9);
}

TEST_CASE("fft2 shift theorem") {
  const std::size_t h = 16, w = 16, dx = 3, dy = 5;
  Tensor x = random_real({h, w}, 31);
  Tensor shifted({h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) shifted((r + dx) % h, (c + dy) % w) = x(r, c);
  Tensor X = fft2(x), S = fft2(shifted);
  double worst = 0;
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      const double ph = -2.0 * std::numbers::pi * (double(u * dx) / h + double(v * dy) / w);
      const cplx expect = X.cvalues()[u * w + v] * std::polar(1.0, ph);
      worst = std::max(worst, std::abs(expect - S.cvalues()[u * w + v]));
    }
  CHECK(worst < 1e-9);
}

TEST_CASE("fft2 rejects degenerate shapes") {
  CHECK_THROWS_AS(fft2(Tensor({8})), ShapeError);
  CHECK_THROWS_AS(fft2(Tensor({1, 8})), ShapeError);
  CHECK_THROWS_AS(fft2(Tensor({0, 8})), ShapeError);
  CHECK_THROWS_AS(ifft2(Tensor({2, 2, 2}, DType::Complex128)), ShapeError);
}

TEST_CASE("fftshift centers DC and ifftshift undoes it") {
  for (Shape s : {Shape{4, 4}, Shape{5, 7}, Shape{6, 3}}) {
    Tensor x({s[0], s[1]});
    x(0, 0) = 1.0;
    Tensor c = fftshift(x);
    CHECK(c(s[0] / 2, s[1] / 2) == 1.0);
    CHECK(ifftshift(c).identical(x));
    Tensor r = random_real(s, 5);
    CHECK(ifftshift(fftshift(r)).identical(r));
  }
}

TEST_CASE("magnitude round trip of a non-negative image") {
  Tensor x = random_real({24, 20}, 41);
  CHECK(max_abs_diff(magnitude(ifft2(fft2(x))), x) < 1e-9);
}

TEST_CASE("rng normal moments over 1e6 samples") {
  Rng rng(2024);
  Tensor s = rng_normal(rng, 1000000);
  double mean = 0, sq = 0;
  for (double v : s.values()) mean += v;
  mean /= 1e6;
  for (double v : s.values()) sq += (v - mean) * (v - mean);
  const double var = sq / 1e6;
  CHECK(mean > -0.005);
  CHECK(mean < 0.005);
  CHECK(var > 0.99);
  CHECK(var < 1.01);
}

TEST_CASE("rng uniform range, determinism and errors") {
  Rng a(7), b(7);
  Tensor u = rng_uniform(a, 0.0, 1.0, 100000);
  const auto [mn, mx] = std::minmax_element(u.values().begin(), u.values().end());
  CHECK(*mn >= 0.0);
  CHECK(*mx < 1.0);
  CHECK(u.identical(rng_uniform(b, 0.0, 1.0, 100000)));
  Rng c(7);
  CHECK_THROWS_AS(rng_uniform(c, 1.0, 0.0, 3), ParamError);
  CHECK_THROWS_AS(c.uniform(2.0, 1.0), ParamError);
  Rng d(9), e(9);
  for (int i = 0; i < 1000; ++i) REQUIRE(d.next_u64() == e.next_u64());
  for (int i = 0; i < 1000; ++i) {
    const auto k = d.uniform_int(-3, 3);
    REQUIRE(k >= -3);
    REQUIRE(k <= 3);
  }
}

TEST_CASE("rng child streams are distinct and parent-independent") {
  Rng root(123);
  std::vector<std::vector<std::uint64_t>> prefixes;
  for (std::uint64_t i = 0; i < 8; ++i) {
    Rng ch = root.child(i);
    std::vector<std::uint64_t> p(1000);
    for (auto& v : p) v = ch.next_u64();
    prefixes.push_back(p);
  }
  for (std::size_t i = 0; i < prefixes.size(); ++i)
    for (std::size_t j = i + 1; j < prefixes.size(); ++j) CHECK(prefixes[i] != prefixes[j]);
  Rng advanced(123);
  for (int i = 0; i < 50; ++i) advanced.next_u64();
  CHECK(advanced.child(3).next_u64() == root.child(3).next_u64());
  CHECK(root.child(0).seed() == splitmix64(123 ^ splitmix64(1)));
}

TEST_CASE("MRT1 encoding layout") {
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const std::string b = encode_mrt1(t);
  REQUIRE(b.size() == 4 + 1 + 1 + 2 * 4 + 6 * 8);
  CHECK(b.substr(0, 4) == "MRT1");
  CHECK(static_cast<unsigned char>(b[4]) == 0);
  CHECK(static_cast<unsigned char>(b[5]) == 2);
  CHECK(static_cast<unsigned char>(b[6]) == 2);
  CHECK(static_cast<unsigned char>(b[10]) == 3);
  double first;
  std::memcpy(&first, b.data() + 14, 8);
  CHECK(first == 1.0);

  Tensor c = random_complex({3, 5}, 1);
  const std::string cb = encode_mrt1(c);
  CHECK(static_cast<unsigned char>(cb[4]) == 1);
  CHECK(decode_mrt1(cb).identical(c));
  CHECK(decode_mrt1(b).identical(t));
}

TEST_CASE("MRT1 rejects malformed input") {
  const std::string good = encode_mrt1(random_real({4, 4}, 2));
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_mrt1(bad), FormatError);
  CHECK_THROWS_AS(decode_mrt1(good.substr(0, good.size() - 1)), FormatError);
  CHECK_THROWS_AS(decode_mrt1(good.substr(0, 7)), FormatError);
  std::string code = good;
  code[4] = 9;
  CHECK_THROWS_AS(decode_mrt1(code), FormatError);
  CHECK_THROWS_AS(decode_mrt1(good + "x"), FormatError);
}

TEST_CASE("MRT1 file round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "mrshift_test_tensor_io";
  std::filesystem::create_directories(dir);
  Tensor t = random_real({3, 4, 5}, 3, -10, 10);
  save_mrt1(t, dir / "t.mrt1");
  CHECK(load_mrt1(dir / "t.mrt1").identical(t));
  CHECK_THROWS_AS(load_mrt1(dir / "absent.mrt1"), DataError);
  std::filesystem::remove_all(dir);
}
