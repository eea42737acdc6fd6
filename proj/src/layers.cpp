#include "mrshift/layers.hpp"

#include <atomic>
#include <cmath>

#include <Eigen/Core>

#include "mrshift/error.hpp"

namespace mrshift {

namespace {

std::atomic<bool> g_reference_kernels{false};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_rank4(const Tensor& x, const std::string& who) {
  if (x.rank() != 4 || x.is_complex())
    throw ShapeError(who + ": expected a real N x C x H x W tensor, got " + shape_str(x.dims()));
}

void init_uniform(Tensor& t, double bound, Rng& rng) {
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

}  // namespace

void set_reference_kernels(bool enabled) { g_reference_kernels = enabled; }
bool reference_kernels() { return g_reference_kernels; }

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
               std::size_t pad, bool bias, std::string name)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad), has_bias_(bias) {
  if (in == 0 || out == 0 || kernel == 0 || stride == 0)
    throw ParamError("conv: zero-sized configuration");
  weight_ = {name + ".weight", Tensor::zeros({out, in, kernel, kernel}),
             Tensor::zeros({out, in, kernel, kernel})};
  if (has_bias_) bias_ = {name + ".bias", Tensor::zeros({out}), Tensor::zeros({out})};
}

Shape Conv2d::output_shape(const Shape& in) const {
  if (in.size() != 4 || in[1] != in_)
    throw ShapeError(kind() + ": expected N x " + std::to_string(in_) + " x H x W, got " +
                     shape_str(in));
  if (in[2] + 2 * pad_ < kernel_ || in[3] + 2 * pad_ < kernel_)
    throw ShapeError(kind() + ": input smaller than the kernel");
  return {in[0], out_, (in[2] + 2 * pad_ - kernel_) / stride_ + 1,
          (in[3] + 2 * pad_ - kernel_) / stride_ + 1};
}

void Conv2d::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * kernel_ * kernel_));
  init_uniform(weight_.value, bound, rng);
  if (has_bias_) init_uniform(bias_.value, bound, rng);
}

void Conv2d::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

namespace {

struct ConvGeom {
  std::size_t c, h, w, k, stride, pad, ho, wo;
};

// col[(ci*k + ky)*k + kx][oy*wo + ox] = x[ci][oy*s + ky - p][ox*s + kx - p]
// Output columns whose input column falls inside the image form one
// contiguous range [lo, hi) per (kx); everything else is zero padding.
void valid_range(const ConvGeom& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  // ox*s + kx - p >= 0  and  ox*s + kx - p < w
  lo = kx >= g.pad ? 0 : (g.pad - kx + g.stride - 1) / g.stride;
  const std::size_t lim = g.w + g.pad - kx;  // ox*s < lim
  hi = lim == 0 ? 0 : std::min(g.wo, (lim - 1) / g.stride + 1);
  lo = std::min(lo, hi);
}

void im2col(const double* x, const ConvGeom& g, double* col) {
  const std::size_t cols = g.ho * g.wo;
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((ci * g.k + ky) * g.k + kx) * cols;
        std::size_t lo, hi;
        valid_range(g, kx, lo, hi);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          // Input index of output column ox is base + ox * stride.
          const auto base = static_cast<std::ptrdiff_t>((ci * g.h + static_cast<std::size_t>(iy)) * g.w + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            if (hi > lo) std::copy_n(x + base + static_cast<std::ptrdiff_t>(lo), hi - lo, dst + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox)
              dst[ox] = x[base + static_cast<std::ptrdiff_t>(ox * g.stride)];
          }
          std::fill(dst + hi, dst + g.wo, 0.0);
        }
      }
}

void col2im(const double* col, const ConvGeom& g, double* x) {
  const std::size_t cols = g.ho * g.wo;
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((ci * g.k + ky) * g.k + kx) * cols;
        std::size_t lo, hi;
        valid_range(g, kx, lo, hi);
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const auto base = static_cast<std::ptrdiff_t>((ci * g.h + static_cast<std::size_t>(iy)) * g.w + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
          const double* src = row + oy * g.wo;
          for (std::size_t ox = lo; ox < hi; ++ox) x[base + static_cast<std::ptrdiff_t>(ox * g.stride)] += src[ox];
        }
      }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, NormMode) {
  require_rank4(x, kind());
  const Shape os = output_shape(x.dims());
  input_ = x;
  const ConvGeom g{in_, x.dim(2), x.dim(3), kernel_, stride_, pad_, os[2], os[3]};
  const std::size_t n = x.dim(0), kk = in_ * kernel_ * kernel_, cols = g.ho * g.wo;
  Tensor y(os);
  const double* xp = x.values().data();
  double* yp = y.values().data();
  const double* wp = weight_.value.values().data();

  if (reference_kernels()) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < out_; ++o)
        for (std::size_t oy = 0; oy < g.ho; ++oy)
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            double acc = has_bias_ ? bias_.value.values()[o] : 0.0;
            for (std::size_t ci = 0; ci < in_; ++ci)
              for (std::size_t ky = 0; ky < kernel_; ++ky)
                for (std::size_t kx = 0; kx < kernel_; ++kx) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) -
                                  static_cast<std::ptrdiff_t>(pad_);
                  const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                  static_cast<std::ptrdiff_t>(pad_);
                  if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                      ix >= static_cast<std::ptrdiff_t>(g.w))
                    continue;
                  acc += wp[((o * in_ + ci) * kernel_ + ky) * kernel_ + kx] *
                         xp[((b * in_ + ci) * g.h + static_cast<std::size_t>(iy)) * g.w +
                            static_cast<std::size_t>(ix)];
                }
            yp[((b * out_ + o) * g.ho + oy) * g.wo + ox] = acc;
          }
    return y;
  }

  std::vector<double> col(kk * cols);
  CMapMat w(wp, static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kk));
  for (std::size_t b = 0; b < n; ++b) {
    im2col(xp + b * in_ * g.h * g.w, g, col.data());
    CMapMat c(col.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(cols));
    MapMat yb(yp + b * out_ * cols, static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(cols));
    yb.noalias() = w * c;
    if (has_bias_) {
      auto bv = bias_.value.values();
      for (std::size_t o = 0; o < out_; ++o) yb.row(static_cast<Eigen::Index>(o)).array() += bv[o];
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad) {
  const Shape os = output_shape(input_.dims());
  if (grad.dims() != os) throw ShapeError(kind() + ": gradient shape mismatch in backward");
  const ConvGeom g{in_, input_.dim(2), input_.dim(3), kernel_, stride_, pad_, os[2], os[3]};
  const std::size_t n = input_.dim(0), kk = in_ * kernel_ * kernel_, cols = g.ho * g.wo;
  Tensor dx(input_.dims());
  const double* xp = input_.values().data();
  const double* gp = grad.values().data();
  double* dxp = dx.values().data();
  const double* wp = weight_.value.values().data();
  double* dwp = weight_.grad.values().data();

  if (has_bias_) {
    auto db = bias_.grad.values();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < out_; ++o) {
        double s = 0.0;
        const double* gr = gp + (b * out_ + o) * cols;
        for (std::size_t i = 0; i < cols; ++i) s += gr[i];
        db[o] += s;
      }
  }

  if (reference_kernels()) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < out_; ++o)
        for (std::size_t oy = 0; oy < g.ho; ++oy)
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const double go = gp[((b * out_ + o) * g.ho + oy) * g.wo + ox];
            for (std::size_t ci = 0; ci < in_; ++ci)
              for (std::size_t ky = 0; ky < kernel_; ++ky)
                for (std::size_t kx = 0; kx < kernel_; ++kx) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) -
                                  static_cast<std::ptrdiff_t>(pad_);
                  const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) -
                                  static_cast<std::ptrdiff_t>(pad_);
                  if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                      ix >= static_cast<std::ptrdiff_t>(g.w))
                    continue;
                  const std::size_t xi = ((b * in_ + ci) * g.h + static_cast<std::size_t>(iy)) * g.w +
                                         static_cast<std::size_t>(ix);
                  const std::size_t wi = ((o * in_ + ci) * kernel_ + ky) * kernel_ + kx;
                  dwp[wi] += go * xp[xi];
                  dxp[xi] += go * wp[wi];
                }
          }
    return dx;
  }

  std::vector<double> col(kk * cols), dcol(kk * cols);
  CMapMat w(wp, static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kk));
  MapMat dw(dwp, static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kk));
  for (std::size_t b = 0; b < n; ++b) {
    im2col(xp + b * in_ * g.h * g.w, g, col.data());
    CMapMat c(col.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(cols));
    CMapMat gb(gp + b * out_ * cols, static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(cols));
    dw.noalias() += gb * c.transpose();
    MapMat dc(dcol.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(cols));
    dc.noalias() = w.transpose() * gb;
    col2im(dcol.data(), g, dxp + b * in_ * g.h * g.w);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x, NormMode) {
  input_ = x;
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& grad) {
  if (grad.dims() != input_.dims()) throw ShapeError("relu: gradient shape mismatch in backward");
  Tensor dx = grad;
  auto d = dx.values();
  auto x = input_.values();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!(x[i] > 0.0)) d[i] = 0.0;
  return dx;
}

// ---------------------------------------------------------------------------
// NormLayer

NormLayer::NormLayer(const NormScheme& scheme, std::size_t channels, std::string name)
    : scheme_(scheme), name_(std::move(name)), state_(make_norm_state(scheme, channels)) {
  if (scheme_.kind == NormKind::None) {
    scheme_.affine = false;
    state_.gamma = state_.beta = Tensor();
  }
  if (scheme_.affine) {
    gamma_ = {name_ + ".gamma", state_.gamma, Tensor::zeros({channels})};
    beta_ = {name_ + ".beta", state_.beta, Tensor::zeros({channels})};
  }
}

std::unique_ptr<Layer> NormLayer::clone() const {
  auto copy = std::make_unique<NormLayer>(*this);
  copy->capture_ = nullptr;
  return copy;
}

Tensor NormLayer::forward(const Tensor& x, NormMode mode) {
  require_rank4(x, "norm " + name_);
  if (capture_) capture_->push_back(x);
  if (scheme_.affine) {
    state_.gamma = gamma_.value;
    state_.beta = beta_.value;
  }
  NormScheme s = scheme_;
  s.mode = mode;
  return normalize(x, s, state_, &cache_);
}

Tensor NormLayer::backward(const Tensor& grad) {
  return normalize_backward(grad, scheme_, state_, cache_, scheme_.affine ? &gamma_.grad : nullptr,
                            scheme_.affine ? &beta_.grad : nullptr);
}

void NormLayer::collect_parameters(std::vector<Parameter*>& out) {
  if (scheme_.affine) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
}

NormState NormLayer::state() const {
  NormState s = state_;
  if (scheme_.affine) {
    s.gamma = gamma_.value;
    s.beta = beta_.value;
  }
  return s;
}

void NormLayer::set_state(const NormState& s) {
  if (s.channels() != state_.channels())
    throw ShapeError("norm " + name_ + ": state channel count mismatch");
  state_ = s;
  if (scheme_.affine) {
    if (s.gamma.size() != state_.channels() || s.beta.size() != state_.channels())
      throw ShapeError("norm " + name_ + ": affine parameters missing from state");
    gamma_.value = s.gamma;
    beta_.value = s.beta;
  }
}

// ---------------------------------------------------------------------------
// pooling

Shape AvgPool2::output_shape(const Shape& in) const {
  if (in.size() != 4 || in[2] % 2 || in[3] % 2)
    throw ShapeError("avgpool2: expected N x C x H x W with even H, W, got " + shape_str(in));
  return {in[0], in[1], in[2] / 2, in[3] / 2};
}

Tensor AvgPool2::forward(const Tensor& x, NormMode) {
  const Shape os = output_shape(x.dims());
  in_dims_ = x.dims();
  Tensor y(os);
  auto xp = x.values();
  auto yp = y.values();
  const std::size_t h = x.dim(2), w = x.dim(3), planes = os[0] * os[1];
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < os[2]; ++r)
      for (std::size_t c = 0; c < os[3]; ++c) {
        const double* s = xp.data() + p * h * w + 2 * r * w + 2 * c;
        yp[(p * os[2] + r) * os[3] + c] = 0.25 * (s[0] + s[1] + s[w] + s[w + 1]);
      }
  return y;
}

Tensor AvgPool2::backward(const Tensor& grad) {
  Tensor dx(in_dims_);
  auto g = grad.values();
  auto d = dx.values();
  const std::size_t h = in_dims_[2], w = in_dims_[3], ho = h / 2, wo = w / 2;
  const std::size_t planes = in_dims_[0] * in_dims_[1];
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t c = 0; c < wo; ++c) {
        const double v = 0.25 * g[(p * ho + r) * wo + c];
        double* s = d.data() + p * h * w + 2 * r * w + 2 * c;
        s[0] += v;
        s[1] += v;
        s[w] += v;
        s[w + 1] += v;
      }
  return dx;
}

Shape GlobalAvgPool::output_shape(const Shape& in) const {
  if (in.size() != 4) throw ShapeError("global_avgpool: expected a rank-4 input, got " + shape_str(in));
  return {in[0], in[1]};
}

Tensor GlobalAvgPool::forward(const Tensor& x, NormMode) {
  const Shape os = output_shape(x.dims());
  in_dims_ = x.dims();
  const std::size_t hw = x.dim(2) * x.dim(3);
  Tensor y(os);
  auto xp = x.values();
  auto yp = y.values();
  for (std::size_t p = 0; p < os[0] * os[1]; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += xp[p * hw + i];
    yp[p] = s / static_cast<double>(hw);
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad) {
  Tensor dx(in_dims_);
  const std::size_t hw = in_dims_[2] * in_dims_[3];
  auto g = grad.values();
  auto d = dx.values();
  for (std::size_t p = 0; p < g.size(); ++p) {
    const double v = g[p] / static_cast<double>(hw);
    for (std::size_t i = 0; i < hw; ++i) d[p * hw + i] = v;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::size_t in, std::size_t out, std::string name) : in_(in), out_(out) {
  weight_ = {name + ".weight", Tensor::zeros({out, in}), Tensor::zeros({out, in})};
  bias_ = {name + ".bias", Tensor::zeros({out}), Tensor::zeros({out})};
}

Shape Linear::output_shape(const Shape& in) const {
  if (in.empty() || shape_numel(in) != in[0] * in_)
    throw ShapeError("linear: expected " + std::to_string(in_) + " features per sample, got " +
                     shape_str(in));
  return {in[0], out_};
}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  init_uniform(weight_.value, bound, rng);
  init_uniform(bias_.value, bound, rng);
}

void Linear::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Tensor Linear::forward(const Tensor& x, NormMode) {
  const Shape os = output_shape(x.dims());
  in_dims_ = x.dims();
  input_ = x;
  const std::size_t n = os[0];
  Tensor y(os);
  auto xp = x.values();
  auto wp = weight_.value.values();
  auto bp = bias_.value.values();
  auto yp = y.values();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out_; ++o) {
      double acc = bp[o];
      for (std::size_t i = 0; i < in_; ++i) acc += wp[o * in_ + i] * xp[b * in_ + i];
      yp[b * out_ + o] = acc;
    }
  return y;
}

Tensor Linear::backward(const Tensor& grad) {
  const std::size_t n = in_dims_[0];
  if (grad.dims() != Shape{n, out_}) throw ShapeError("linear: gradient shape mismatch in backward");
  Tensor dx(in_dims_);
  auto g = grad.values();
  auto xp = input_.values();
  auto wp = weight_.value.values();
  auto dw = weight_.grad.values();
  auto db = bias_.grad.values();
  auto d = dx.values();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out_; ++o) {
      const double go = g[b * out_ + o];
      db[o] += go;
      for (std::size_t i = 0; i < in_; ++i) {
        dw[o * in_ + i] += go * xp[b * in_ + i];
        d[b * in_ + i] += go * wp[o * in_ + i];
      }
    }
  return dx;
}

// ---------------------------------------------------------------------------
// PreactBlock

PreactBlock::PreactBlock(std::size_t in, std::size_t out, std::size_t stride,
                         const NormScheme& scheme, std::string name)
    : norm1_(scheme, in, name + ".norm1"),
      conv1_(in, out, 3, stride, 1, scheme.kind == NormKind::None, name + ".conv1"),
      norm2_(scheme, out, name + ".norm2"),
      conv2_(out, out, 3, 1, 1, scheme.kind == NormKind::None, name + ".conv2") {
  if (in != out || stride != 1)
    shortcut_ = std::make_unique<Conv2d>(in, out, 1, stride, 0, false, name + ".shortcut");
}

PreactBlock::PreactBlock(const PreactBlock& o)
    : Layer(o),
      norm1_(o.norm1_),
      relu1_(o.relu1_),
      conv1_(o.conv1_),
      norm2_(o.norm2_),
      relu2_(o.relu2_),
      conv2_(o.conv2_),
      shortcut_(o.shortcut_ ? std::make_unique<Conv2d>(*o.shortcut_) : nullptr) {
  norm1_.set_capture(nullptr);
  norm2_.set_capture(nullptr);
}

Shape PreactBlock::output_shape(const Shape& in) const {
  return conv2_.output_shape(conv1_.output_shape(in));
}

void PreactBlock::init(Rng& rng) {
  Rng r1 = rng.child(1), r2 = rng.child(2), r3 = rng.child(3);
  conv1_.init(r1);
  conv2_.init(r2);
  if (shortcut_) shortcut_->init(r3);
}

Tensor PreactBlock::forward(const Tensor& x, NormMode mode) {
  const Tensor h = relu1_.forward(norm1_.forward(x, mode), mode);
  Tensor t = conv2_.forward(relu2_.forward(norm2_.forward(conv1_.forward(h, mode), mode), mode), mode);
  if (shortcut_)
    t += shortcut_->forward(h, mode);
  else
    t += x;
  return t;
}

Tensor PreactBlock::backward(const Tensor& grad) {
  Tensor dh = conv1_.backward(norm2_.backward(relu2_.backward(conv2_.backward(grad))));
  if (shortcut_) dh += shortcut_->backward(grad);
  Tensor dx = norm1_.backward(relu1_.backward(dh));
  if (!shortcut_) dx += grad;
  return dx;
}

void PreactBlock::collect_parameters(std::vector<Parameter*>& out) {
  norm1_.collect_parameters(out);
  conv1_.collect_parameters(out);
  norm2_.collect_parameters(out);
  conv2_.collect_parameters(out);
  if (shortcut_) shortcut_->collect_parameters(out);
}

void PreactBlock::collect_norms(std::vector<NormLayer*>& out) {
  out.push_back(&norm1_);
  out.push_back(&norm2_);
}

}  // namespace mrshift
