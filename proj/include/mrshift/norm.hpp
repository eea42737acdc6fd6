#pragma once

#include <cstdint>
#include <span>
#include <string>

#include <json.hpp>

#include "mrshift/tensor.hpp"

namespace mrshift {

// Feature normalization over N x C x H x W activations:
//   a_hat_i = (a_i - mu_i) / sqrt(var_i + eps),  mu/var taken over the set S_i
//   batch:    S_i = all (n, h, w) sharing i's channel
//   group:    S_i = i's sample, the C/G channels of i's group, all (h, w)
//   layer:    group with G = 1
//   instance: group with G = C
//   none:     identity
// followed by gamma_c * a_hat + beta_c when affine. Variances use 1/m.
enum class NormKind { Batch, Layer, Group, Instance, None };

// Train: batch kind normalizes with batch statistics and updates running stats.
// Eval: batch kind normalizes with running statistics.
// Adapt: like Train, but the running-stat update uses adapt_momentum and
//        touches only the statistics selected by adapt_which (AdaBN).
enum class NormMode { Train, Eval, Adapt };

enum class AdaptWhich { Both, MeanOnly, VarOnly };

std::string to_string(NormKind k);
NormKind norm_kind_from_string(const std::string& s);
std::string to_string(AdaptWhich w);
AdaptWhich adapt_which_from_string(const std::string& s);

struct NormScheme {
  NormKind kind = NormKind::Batch;
  std::size_t groups = 1;  // group kind only
  double eps = 1e-5;
  bool affine = true;
  double momentum = 0.1;  // running-stat EMA weight of the new batch
  NormMode mode = NormMode::Train;
  double adapt_momentum = 0.1;
  AdaptWhich adapt_which = AdaptWhich::Both;

  // Number of statistic groups per sample for per-sample kinds.
  std::size_t groups_for(std::size_t channels) const;
};

nlohmann::json to_json(const NormScheme& s);
NormScheme norm_scheme_from_json(const nlohmann::json& j);
void validate(const NormScheme& s, std::size_t channels);

struct NormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  Tensor gamma;         // [C], empty unless affine
  Tensor beta;          // [C], empty unless affine
  std::uint64_t batches_seen = 0;

  std::size_t channels() const { return running_mean.size(); }
};

// Running mean 0, running var 1, gamma 1, beta 0.
NormState make_norm_state(const NormScheme& s, std::size_t channels);

// Values saved by normalize() for the backward pass.
struct NormCache {
  Tensor x_hat;                 // normalized input before the affine map
  std::vector<double> inv_std;  // one per statistic set
  bool batch_statistics = false;  // false when fixed running stats were used
};

// Applies the scheme. In Train/Adapt mode with the batch kind, `state`'s
// running statistics are updated (single writer).
Tensor normalize(const Tensor& a, const NormScheme& scheme, NormState& state,
                 NormCache* cache = nullptr);

// Gradient w.r.t. the input; accumulates into grad_gamma / grad_beta when affine.
Tensor normalize_backward(const Tensor& grad_out, const NormScheme& scheme, const NormState& state,
                          const NormCache& cache, Tensor* grad_gamma, Tensor* grad_beta);

// Per-channel pooled statistics over (N, H, W) of a feature stream,
// accumulated by Chan/Welford merging. Variances are the 1/m estimate.
struct ChannelStats {
  Tensor mean;
  Tensor var;
  std::size_t count = 0;
};
ChannelStats channel_statistics(std::span<const Tensor> stream);

struct AdaptResult {
  NormState state;
  std::size_t batches = 0;
  bool empty_stream = false;
};

// AdaBN: EMA of per-batch channel statistics with weight m_a per batch;
// gamma/beta untouched.
AdaptResult adapt_bn(const NormState& state, std::span<const Tensor> stream, double m_a,
                     AdaptWhich which = AdaptWhich::Both);
AdaptResult adapt_bn_partial(const NormState& state, std::span<const Tensor> stream,
                             AdaptWhich which, double m_a = 0.1);

struct DriftResult {
  double d_mean = 0;      // ||running_mean - E_test[h]||^2
  double d_var = 0;       // ||running_var - Var_test[h]||^2
  double d_mean_avg = 0;  // the above divided by C
  double d_var_avg = 0;
};

DriftResult bn_drift(const NormState& state, std::span<const Tensor> stream);

}  // namespace mrshift
