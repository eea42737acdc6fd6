#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mrshift/layers.hpp"
#include "mrshift/norm.hpp"
#include "mrshift/tensor.hpp"

namespace mrshift {

// Sequential classifier over N x 1 x H x W inputs producing N x K logits.
class Model {
 public:
  Model() = default;
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  // conv3x3(1->w) -> preact(w->w) -> preact(w->2w, stride 2) -> GAP -> linear(2w->K)
  static Model tiny_preact(const NormScheme& scheme, std::size_t num_classes, std::uint64_t seed,
                           std::size_t width = 8);
  // Flatten -> linear(H*W -> K); for toy problems and tests.
  static Model linear(std::size_t features, std::size_t num_classes, std::uint64_t seed);
  // Rebuilds an architecture by name with freshly initialized parameters.
  static Model build(const std::string& topology, const NormScheme& scheme,
                     std::size_t num_classes, std::uint64_t seed, std::size_t width,
                     std::size_t features);

  const std::string& topology() const { return topology_; }
  const NormScheme& scheme() const { return scheme_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t width() const { return width_; }
  std::size_t features() const { return features_; }
  std::uint64_t init_seed() const { return seed_; }

  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  std::size_t param_count();

  // Shape errors name the failing layer index.
  Tensor forward(const Tensor& batch, NormMode mode);
  // Gradient w.r.t. the logits of the preceding forward(); fills parameter grads.
  void backward(const Tensor& grad_logits);

  std::vector<Parameter*> parameters();
  std::vector<NormLayer*> norm_layers();
  void zero_grad();

 private:
  void append(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  std::vector<std::unique_ptr<Layer>> layers_;
  std::string topology_;
  NormScheme scheme_;
  std::size_t num_classes_ = 2;
  std::size_t width_ = 8;
  std::size_t features_ = 0;
  std::uint64_t seed_ = 0;
};

struct LossGrad {
  double loss = 0;
  std::vector<Tensor> grads;  // aligned with model.parameters()
};

// Mean softmax cross-entropy of one batch and its parameter gradients, with
// the model in train mode.
LossGrad loss_and_grad(Model& model, const Tensor& batch, std::span<const std::size_t> labels);

double softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                             Tensor* grad_logits);

// Softmax probability of class 1 for each row of N x K logits.
std::vector<double> positive_probability(const Tensor& logits);

// Checkpoint directory: manifest.json, params/*.mrt1, normstate/*.mrt1.
void save_model(Model& model, const std::filesystem::path& dir);
Model load_model(const std::filesystem::path& dir);

}  // namespace mrshift
