#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mrshift/norm.hpp"
#include "mrshift/rng.hpp"
#include "mrshift/tensor.hpp"

namespace mrshift {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

// Switches convolutions to direct nested loops instead of im2col + GEMM.
// Gradient verification runs with this enabled. Process-wide; set it
// before any concurrent work starts.
void set_reference_kernels(bool enabled);
bool reference_kernels();

// A differentiable layer. forward() caches what backward() needs; backward()
// must follow the forward() whose input it differentiates, and accumulates
// into each parameter's grad.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor forward(const Tensor& x, NormMode mode) = 0;
  virtual Tensor backward(const Tensor& grad) = 0;
  virtual void collect_parameters(std::vector<Parameter*>&) {}
  virtual void collect_norms(std::vector<class NormLayer*>&) {}
};

class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t pad,
         bool bias, std::string name);

  std::string kind() const override { return kernel_ == 3 ? "conv3x3" : "conv1x1"; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, NormMode mode) override;
  Tensor backward(const Tensor& grad) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  // Fan-in scaled uniform: U(-1/sqrt(in*k*k), 1/sqrt(in*k*k)); bias likewise.
  void init(Rng& rng);
  Parameter& weight() { return weight_; }

 private:
  std::size_t in_, out_, kernel_, stride_, pad_;
  bool has_bias_;
  Parameter weight_;  // [out, in, k, k]
  Parameter bias_;    // [out]
  Tensor input_;
};

class ReLU final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, NormMode mode) override;
  Tensor backward(const Tensor& grad) override;

 private:
  Tensor input_;
};

class NormLayer final : public Layer {
 public:
  NormLayer(const NormScheme& scheme, std::size_t channels, std::string name);

  std::string kind() const override { return "norm"; }
  std::unique_ptr<Layer> clone() const override;
  Shape output_shape(const Shape& in) const override { return in; }
  Tensor forward(const Tensor& x, NormMode mode) override;
  Tensor backward(const Tensor& grad) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_norms(std::vector<NormLayer*>& out) override { out.push_back(this); }

  const std::string& name() const { return name_; }
  NormScheme& scheme() { return scheme_; }
  const NormScheme& scheme() const { return scheme_; }
  // Running statistics plus gamma/beta (mirrored from the parameters).
  NormState state() const;
  void set_state(const NormState& s);

  // When set, every forward() input is appended here (feature tap).
  void set_capture(std::vector<Tensor>* sink) { capture_ = sink; }

 private:
  NormScheme scheme_;
  std::string name_;
  NormState state_;
  Parameter gamma_, beta_;
  NormCache cache_;
  std::vector<Tensor>* capture_ = nullptr;
};

class AvgPool2 final : public Layer {
 public:
  std::string kind() const override { return "avgpool2"; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<AvgPool2>(*this); }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, NormMode mode) override;
  Tensor backward(const Tensor& grad) override;

 private:
  Shape in_dims_;
};

class GlobalAvgPool final : public Layer {
 public:
  std::string kind() const override { return "global_avgpool"; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, NormMode mode) override;
  Tensor backward(const Tensor& grad) override;

 private:
  Shape in_dims_;
};

// Flattens everything after the batch axis and applies y = W x + b.
class Linear final : public Layer {
 public:
  Linear(std::size_t in, std::size_t out, std::string name);

  std::string kind() const override { return "linear"; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, NormMode mode) override;
  Tensor backward(const Tensor& grad) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  void init(Rng& rng);
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter weight_;  // [out, in]
  Parameter bias_;    // [out]
  Shape in_dims_;
  Tensor input_;
};

// Pre-activation residual block:
//   h = relu(norm1(x)); out = conv2(relu(norm2(conv1(h)))) + shortcut
// with shortcut = x, or a strided 1x1 conv of h when the width or stride changes.
class PreactBlock final : public Layer {
 public:
  PreactBlock(std::size_t in, std::size_t out, std::size_t stride, const NormScheme& scheme,
              std::string name);
  PreactBlock(const PreactBlock& other);

  std::string kind() const override { return "preact_block"; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<PreactBlock>(*this); }
  Shape output_shape(const Shape& in) const override;
  Tensor forward(const Tensor& x, NormMode mode) override;
  Tensor backward(const Tensor& grad) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_norms(std::vector<NormLayer*>& out) override;

  void init(Rng& rng);
  bool has_projection() const { return static_cast<bool>(shortcut_); }

 private:
  NormLayer norm1_;
  ReLU relu1_;
  Conv2d conv1_;
  NormLayer norm2_;
  ReLU relu2_;
  Conv2d conv2_;
  std::unique_ptr<Conv2d> shortcut_;
};

}  // namespace mrshift
