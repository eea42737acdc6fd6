#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mrshift {

using cplx = std::complex<double>;
using Shape = std::vector<std::size_t>;

enum class DType : std::uint8_t { Real64 = 0, Complex128 = 1 };

std::size_t shape_numel(const Shape& dims);
std::string shape_str(const Shape& dims);

// Dense row-major N-d array of doubles or complex doubles. The shape is
// fixed at construction; `reshaped` returns a new tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims, DType dtype = DType::Real64);
  Tensor(Shape dims, std::vector<double> values);
  Tensor(Shape dims, std::vector<cplx> values);

  static Tensor zeros(Shape dims, DType dtype = DType::Real64) {
    return Tensor(std::move(dims), dtype);
  }
  static Tensor full(Shape dims, double value);

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return numel_; }
  DType dtype() const noexcept { return dtype_; }
  bool is_complex() const noexcept { return dtype_ == DType::Complex128; }
  bool empty() const noexcept { return numel_ == 0; }

  // Element access. `values` requires Real64, `cvalues` requires Complex128.
  std::span<double> values();
  std::span<const double> values() const;
  std::span<cplx> cvalues();
  std::span<const cplx> cvalues() const;

  // 2-D convenience accessors (row, col) for real images.
  double& operator()(std::size_t r, std::size_t c) { return real_[r * dims_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return real_[r * dims_[1] + c]; }

  Tensor reshaped(Shape dims) const;
  Tensor to_complex() const;
  Tensor real_part() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);
  Tensor& operator*=(cplx s);

  double max_abs() const;
  double sum_sq() const;

  // Bit-exact equality of shape, dtype and payload.
  bool identical(const Tensor& other) const;

 private:
  Shape dims_;
  DType dtype_ = DType::Real64;
  std::size_t numel_ = 0;
  std::vector<double> real_;
  std::vector<cplx> cplx_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);
Tensor operator*(double s, Tensor a);
Tensor operator*(Tensor a, cplx s);

// max |a - b| over all elements; shapes and dtypes must agree.
double max_abs_diff(const Tensor& a, const Tensor& b);

// Element-wise |z|; complex input, real output.
Tensor magnitude(const Tensor& t);

}  // namespace mrshift
