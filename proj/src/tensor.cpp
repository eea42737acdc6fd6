#include "mrshift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "mrshift/error.hpp"

namespace mrshift {

std::size_t shape_numel(const Shape& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape dims, DType dtype)
    : dims_(std::move(dims)), dtype_(dtype), numel_(shape_numel(dims_)) {
  if (dtype_ == DType::Real64)
    real_.assign(numel_, 0.0);
  else
    cplx_.assign(numel_, cplx{});
}

Tensor::Tensor(Shape dims, std::vector<double> values)
    : dims_(std::move(dims)), dtype_(DType::Real64), numel_(shape_numel(dims_)),
      real_(std::move(values)) {
  if (real_.size() != numel_)
    throw ShapeError("tensor: " + std::to_string(real_.size()) +
                     " values do not fill shape " + shape_str(dims_));
}

Tensor::Tensor(Shape dims, std::vector<cplx> values)
    : dims_(std::move(dims)), dtype_(DType::Complex128), numel_(shape_numel(dims_)),
      cplx_(std::move(values)) {
  if (cplx_.size() != numel_)
    throw ShapeError("tensor: " + std::to_string(cplx_.size()) +
                     " values do not fill shape " + shape_str(dims_));
}

Tensor Tensor::full(Shape dims, double value) {
  Tensor t(std::move(dims));
  std::fill(t.real_.begin(), t.real_.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= dims_.size())
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(dims_));
  return dims_[axis];
}

std::span<double> Tensor::values() {
  if (dtype_ != DType::Real64) throw ShapeError("tensor: real view of complex tensor");
  return real_;
}

std::span<const double> Tensor::values() const {
  if (dtype_ != DType::Real64) throw ShapeError("tensor: real view of complex tensor");
  return real_;
}

std::span<cplx> Tensor::cvalues() {
  if (dtype_ != DType::Complex128) throw ShapeError("tensor: complex view of real tensor");
  return cplx_;
}

std::span<const cplx> Tensor::cvalues() const {
  if (dtype_ != DType::Complex128) throw ShapeError("tensor: complex view of real tensor");
  return cplx_;
}

Tensor Tensor::reshaped(Shape dims) const {
  if (shape_numel(dims) != numel_)
    throw ShapeError("tensor: cannot reshape " + shape_str(dims_) + " to " + shape_str(dims));
  Tensor t = *this;
  t.dims_ = std::move(dims);
  return t;
}

Tensor Tensor::to_complex() const {
  if (is_complex()) return *this;
  std::vector<cplx> v(real_.begin(), real_.end());
  return Tensor(dims_, std::move(v));
}

Tensor Tensor::real_part() const {
  if (!is_complex()) return *this;
  std::vector<double> v(numel_);
  for (std::size_t i = 0; i < numel_; ++i) v[i] = cplx_[i].real();
  return Tensor(dims_, std::move(v));
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dims() != b.dims() || a.dtype() != b.dtype())
    throw ShapeError(std::string("tensor ") + op + ": operand mismatch " + shape_str(a.dims()) +
                     " vs " + shape_str(b.dims()));
}

}  // namespace

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same(*this, other, "+=");
  for (std::size_t i = 0; i < real_.size(); ++i) real_[i] += other.real_[i];
  for (std::size_t i = 0; i < cplx_.size(); ++i) cplx_[i] += other.cplx_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same(*this, other, "-=");
  for (std::size_t i = 0; i < real_.size(); ++i) real_[i] -= other.real_[i];
  for (std::size_t i = 0; i < cplx_.size(); ++i) cplx_[i] -= other.cplx_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (auto& v : real_) v *= s;
  for (auto& v : cplx_) v *= s;
  return *this;
}

Tensor& Tensor::operator*=(cplx s) {
  if (!is_complex()) *this = to_complex();
  for (auto& v : cplx_) v *= s;
  return *this;
}

double Tensor::max_abs() const {
  double m = 0.0;
  for (auto v : real_) m = std::max(m, std::abs(v));
  for (auto v : cplx_) m = std::max(m, std::abs(v));
  return m;
}

double Tensor::sum_sq() const {
  double s = 0.0;
  for (auto v : real_) s += v * v;
  for (auto v : cplx_) s += std::norm(v);
  return s;
}

bool Tensor::identical(const Tensor& other) const {
  if (dims_ != other.dims_ || dtype_ != other.dtype_) return false;
  if (is_complex())
    return std::memcmp(cplx_.data(), other.cplx_.data(), numel_ * sizeof(cplx)) == 0;
  return std::memcmp(real_.data(), other.real_.data(), numel_ * sizeof(double)) == 0;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }
Tensor operator*(double s, Tensor a) { return a *= s; }
Tensor operator*(Tensor a, cplx s) { return a *= s; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same(a, b, "diff");
  double m = 0.0;
  if (a.is_complex()) {
    auto x = a.cvalues();
    auto y = b.cvalues();
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  } else {
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  }
  return m;
}

Tensor magnitude(const Tensor& t) {
  if (!t.is_complex()) throw ShapeError("magnitude: complex tensor required");
  auto src = t.cvalues();
  std::vector<double> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = std::abs(src[i]);
  return Tensor(t.dims(), std::move(out));
}

}  // namespace mrshift
