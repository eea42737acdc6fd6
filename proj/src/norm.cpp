#include "mrshift/norm.hpp"

#include <cmath>

#include "mrshift/error.hpp"

namespace mrshift {

namespace {

constexpr const char* kKindNames[] = {"batch", "layer", "group", "instance", "none"};

struct Layout {
  std::size_t n, c, hw;
};

Layout layout_of(const Tensor& a, const NormState& state, const char* op) {
  if (a.rank() != 4 || a.is_complex())
    throw ShapeError(std::string(op) + ": expected a real N x C x H x W tensor, got " +
                     shape_str(a.dims()));
  if (a.dim(1) != state.channels())
    throw ShapeError(std::string(op) + ": input has " + std::to_string(a.dim(1)) +
                     " channels, state has " + std::to_string(state.channels()));
  return {a.dim(0), a.dim(1), a.dim(2) * a.dim(3)};
}

// Sets are either channels (batch statistics) or (sample, group) pairs; in both
// cases each set is a list of contiguous runs of the flattened tensor.
template <class F>
void for_each_run_of_channel(const Layout& l, std::size_t c, F&& f) {
  for (std::size_t n = 0; n < l.n; ++n) f((n * l.c + c) * l.hw, l.hw);
}

void batch_channel_stats(std::span<const double> x, const Layout& l, std::vector<double>& mean,
                         std::vector<double>& var) {
  mean.assign(l.c, 0.0);
  var.assign(l.c, 0.0);
  const double m = static_cast<double>(l.n * l.hw);
  for (std::size_t c = 0; c < l.c; ++c) {
    double s = 0.0;
    for_each_run_of_channel(l, c, [&](std::size_t off, std::size_t len) {
      for (std::size_t i = 0; i < len; ++i) s += x[off + i];
    });
    const double mu = s / m;
    double q = 0.0;
    for_each_run_of_channel(l, c, [&](std::size_t off, std::size_t len) {
      for (std::size_t i = 0; i < len; ++i) {
        const double d = x[off + i] - mu;
        q += d * d;
      }
    });
    mean[c] = mu;
    var[c] = q / m;
  }
}

void ema_update(NormState& state, const std::vector<double>& mean, const std::vector<double>& var,
                double m, AdaptWhich which) {
  auto rm = state.running_mean.values();
  auto rv = state.running_var.values();
  for (std::size_t c = 0; c < rm.size(); ++c) {
    if (which != AdaptWhich::VarOnly) rm[c] = (1.0 - m) * rm[c] + m * mean[c];
    if (which != AdaptWhich::MeanOnly) rv[c] = (1.0 - m) * rv[c] + m * var[c];
  }
}

}  // namespace

std::string to_string(NormKind k) { return kKindNames[static_cast<int>(k)]; }

NormKind norm_kind_from_string(const std::string& s) {
  for (int i = 0; i < 5; ++i)
    if (s == kKindNames[i]) return static_cast<NormKind>(i);
  throw ParamError("unknown normalization kind '" + s + "'");
}

std::string to_string(AdaptWhich w) {
  switch (w) {
    case AdaptWhich::Both: return "both";
    case AdaptWhich::MeanOnly: return "mean_only";
    case AdaptWhich::VarOnly: return "var_only";
  }
  return "both";
}

AdaptWhich adapt_which_from_string(const std::string& s) {
  if (s == "both") return AdaptWhich::Both;
  if (s == "mean_only") return AdaptWhich::MeanOnly;
  if (s == "var_only") return AdaptWhich::VarOnly;
  throw ParamError("unknown adaptation selector '" + s + "'");
}

std::size_t NormScheme::groups_for(std::size_t channels) const {
  switch (kind) {
    case NormKind::Layer: return 1;
    case NormKind::Instance: return channels;
    case NormKind::Group: return groups;
    default: return 0;
  }
}

nlohmann::json to_json(const NormScheme& s) {
  return {{"kind", to_string(s.kind)},     {"groups", s.groups},
          {"eps", s.eps},                  {"affine", s.affine},
          {"momentum", s.momentum},        {"adapt_momentum", s.adapt_momentum},
          {"adapt_which", to_string(s.adapt_which)}};
}

NormScheme norm_scheme_from_json(const nlohmann::json& j) {
  NormScheme s;
  try {
    s.kind = norm_kind_from_string(j.at("kind").get<std::string>());
    s.groups = j.value("groups", s.groups);
    s.eps = j.value("eps", s.eps);
    s.affine = j.value("affine", s.affine);
    s.momentum = j.value("momentum", s.momentum);
    s.adapt_momentum = j.value("adapt_momentum", s.adapt_momentum);
    s.adapt_which = adapt_which_from_string(j.value("adapt_which", std::string("both")));
  } catch (const nlohmann::json::exception& e) {
    throw ParamError(std::string("norm scheme: ") + e.what());
  }
  if (!(s.eps > 0)) throw ParamError("norm scheme: eps must be > 0");
  return s;
}

void validate(const NormScheme& s, std::size_t channels) {
  if (!(s.eps > 0)) throw ParamError("norm: eps must be > 0");
  if (s.kind == NormKind::Group) {
    if (s.groups < 1 || s.groups > channels || channels % s.groups != 0)
      throw ParamError("norm: group count " + std::to_string(s.groups) + " does not divide " +
                       std::to_string(channels) + " channels");
  }
  if (s.kind == NormKind::Batch && !(s.momentum >= 0 && s.momentum <= 1))
    throw ParamError("norm: momentum must be in [0, 1]");
}

NormState make_norm_state(const NormScheme& s, std::size_t channels) {
  validate(s, channels);
  NormState st;
  st.running_mean = Tensor::zeros({channels});
  st.running_var = Tensor::full({channels}, 1.0);
  if (s.affine) {
    st.gamma = Tensor::full({channels}, 1.0);
    st.beta = Tensor::zeros({channels});
  }
  return st;
}

Tensor normalize(const Tensor& a, const NormScheme& scheme, NormState& state, NormCache* cache) {
  const Layout l = layout_of(a, state, "normalize");
  if (scheme.kind == NormKind::None) return a;
  validate(scheme, l.c);

  const auto x = a.values();
  Tensor x_hat(a.dims());
  auto xh = x_hat.values();
  std::vector<double> inv_std;
  bool batch_stats = true;

  if (scheme.kind == NormKind::Batch) {
    if (l.n == 0) throw ShapeError("normalize: batch normalization of an empty batch");
    std::vector<double> mean, var;
    if (scheme.mode == NormMode::Eval) {
      if (state.batches_seen == 0)
        throw ParamError("normalize: batch norm in eval mode before any training batch");
      auto rm = state.running_mean.values();
      auto rv = state.running_var.values();
      mean.assign(rm.begin(), rm.end());
      var.assign(rv.begin(), rv.end());
      batch_stats = false;
    } else {
      batch_channel_stats(x, l, mean, var);
      if (scheme.mode == NormMode::Train) {
        ema_update(state, mean, var, scheme.momentum, AdaptWhich::Both);
        ++state.batches_seen;
      } else {
        ema_update(state, mean, var, scheme.adapt_momentum, scheme.adapt_which);
      }
    }
    inv_std.resize(l.c);
    for (std::size_t c = 0; c < l.c; ++c) {
      inv_std[c] = 1.0 / std::sqrt(var[c] + scheme.eps);
      for_each_run_of_channel(l, c, [&](std::size_t off, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i) xh[off + i] = (x[off + i] - mean[c]) * inv_std[c];
      });
    }
  } else {
    const std::size_t g = scheme.groups_for(l.c);
    const std::size_t run = (l.c / g) * l.hw;
    const double m = static_cast<double>(run);
    inv_std.resize(l.n * g);
    for (std::size_t set = 0; set < l.n * g; ++set) {
      const std::size_t off = set * run;
      double s = 0.0;
      for (std::size_t i = 0; i < run; ++i) s += x[off + i];
      const double mu = s / m;
      double q = 0.0;
      for (std::size_t i = 0; i < run; ++i) {
        const double d = x[off + i] - mu;
        q += d * d;
      }
      const double is = 1.0 / std::sqrt(q / m + scheme.eps);
      inv_std[set] = is;
      for (std::size_t i = 0; i < run; ++i) xh[off + i] = (x[off + i] - mu) * is;
    }
  }

  Tensor out = x_hat;
  if (scheme.affine) {
    auto y = out.values();
    auto gm = state.gamma.values();
    auto bt = state.beta.values();
    for (std::size_t n = 0; n < l.n; ++n)
      for (std::size_t c = 0; c < l.c; ++c) {
        double* p = y.data() + (n * l.c + c) * l.hw;
        for (std::size_t i = 0; i < l.hw; ++i) p[i] = gm[c] * p[i] + bt[c];
      }
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->batch_statistics = batch_stats;
  }
  return out;
}

Tensor normalize_backward(const Tensor& grad_out, const NormScheme& scheme, const NormState& state,
                          const NormCache& cache, Tensor* grad_gamma, Tensor* grad_beta) {
  const Layout l = layout_of(grad_out, state, "normalize_backward");
  if (scheme.kind == NormKind::None) return grad_out;

  const auto dy = grad_out.values();
  const auto xh = cache.x_hat.values();
  Tensor dxh_t(grad_out.dims());
  auto dxh = dxh_t.values();

  if (scheme.affine) {
    auto gm = state.gamma.values();
    double* gg = grad_gamma ? grad_gamma->values().data() : nullptr;
    double* gb = grad_beta ? grad_beta->values().data() : nullptr;
    for (std::size_t n = 0; n < l.n; ++n)
      for (std::size_t c = 0; c < l.c; ++c) {
        const std::size_t off = (n * l.c + c) * l.hw;
        double sg = 0.0, sb = 0.0;
        for (std::size_t i = 0; i < l.hw; ++i) {
          sg += dy[off + i] * xh[off + i];
          sb += dy[off + i];
          dxh[off + i] = dy[off + i] * gm[c];
        }
        if (gg) gg[c] += sg;
        if (gb) gb[c] += sb;
      }
  } else {
    std::copy(dy.begin(), dy.end(), dxh.begin());
  }

  Tensor grad_in(grad_out.dims());
  auto dx = grad_in.values();

  if (scheme.kind == NormKind::Batch) {
    for (std::size_t c = 0; c < l.c; ++c) {
      const double is = cache.inv_std[c];
      if (!cache.batch_statistics) {
        for_each_run_of_channel(l, c, [&](std::size_t off, std::size_t len) {
          for (std::size_t i = 0; i < len; ++i) dx[off + i] = dxh[off + i] * is;
        });
        continue;
      }
      const double m = static_cast<double>(l.n * l.hw);
      double s1 = 0.0, s2 = 0.0;
      for_each_run_of_channel(l, c, [&](std::size_t off, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i) {
          s1 += dxh[off + i];
          s2 += dxh[off + i] * xh[off + i];
        }
      });
      for_each_run_of_channel(l, c, [&](std::size_t off, std::size_t len) {
        for (std::size_t i = 0; i < len; ++i)
          dx[off + i] = is * (dxh[off + i] - (s1 + xh[off + i] * s2) / m);
      });
    }
  } else {
    const std::size_t g = scheme.groups_for(l.c);
    const std::size_t run = (l.c / g) * l.hw;
    const double m = static_cast<double>(run);
    for (std::size_t set = 0; set < l.n * g; ++set) {
      const std::size_t off = set * run;
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < run; ++i) {
        s1 += dxh[off + i];
        s2 += dxh[off + i] * xh[off + i];
      }
      const double is = cache.inv_std[set];
      for (std::size_t i = 0; i < run; ++i)
        dx[off + i] = is * (dxh[off + i] - (s1 + xh[off + i] * s2) / m);
    }
  }
  return grad_in;
}

ChannelStats channel_statistics(std::span<const Tensor> stream) {
  ChannelStats out;
  if (stream.empty()) return out;
  const std::size_t c = stream.front().dim(1);
  std::vector<double> mean(c, 0.0), m2(c, 0.0);
  std::size_t count = 0;
  for (const auto& t : stream) {
    if (t.rank() != 4 || t.dim(1) != c)
      throw ShapeError("channel_statistics: inconsistent feature shapes in stream");
    const Layout l{t.dim(0), c, t.dim(2) * t.dim(3)};
    const std::size_t nb = l.n * l.hw;
    if (nb == 0) continue;
    std::vector<double> bm, bv;
    batch_channel_stats(t.values(), l, bm, bv);
    for (std::size_t ch = 0; ch < c; ++ch) {
      // Chan et al. pairwise merge of (count, mean, M2).
      const double na = static_cast<double>(count), nbd = static_cast<double>(nb);
      const double delta = bm[ch] - mean[ch];
      const double tot = na + nbd;
      mean[ch] += delta * nbd / tot;
      m2[ch] += bv[ch] * nbd + delta * delta * na * nbd / tot;
    }
    count += nb;
  }
  out.count = count;
  out.mean = Tensor({c}, mean);
  for (auto& v : m2) v = count ? v / static_cast<double>(count) : 0.0;
  out.var = Tensor({c}, m2);
  return out;
}

AdaptResult adapt_bn(const NormState& state, std::span<const Tensor> stream, double m_a,
                     AdaptWhich which) {
  if (!(m_a >= 0 && m_a <= 1)) throw ParamError("adapt_bn: momentum must be in [0, 1]");
  AdaptResult r{state, 0, stream.empty()};
  for (const auto& t : stream) {
    const Layout l = layout_of(t, state, "adapt_bn");
    if (l.n == 0) continue;
    std::vector<double> mean, var;
    batch_channel_stats(t.values(), l, mean, var);
    ema_update(r.state, mean, var, m_a, which);
    ++r.batches;
  }
  return r;
}

AdaptResult adapt_bn_partial(const NormState& state, std::span<const Tensor> stream,
                             AdaptWhich which, double m_a) {
  return adapt_bn(state, stream, m_a, which);
}

DriftResult bn_drift(const NormState& state, std::span<const Tensor> stream) {
  if (state.batches_seen == 0) throw ParamError("bn_drift: state has no training statistics");
  if (stream.empty()) throw DataError("bn_drift: empty feature stream");
  for (const auto& t : stream) layout_of(t, state, "bn_drift");
  const ChannelStats s = channel_statistics(stream);
  const auto rm = state.running_mean.values();
  const auto rv = state.running_var.values();
  const auto sm = s.mean.values();
  const auto sv = s.var.values();
  DriftResult d;
  for (std::size_t c = 0; c < rm.size(); ++c) {
    d.d_mean += (rm[c] - sm[c]) * (rm[c] - sm[c]);
    d.d_var += (rv[c] - sv[c]) * (rv[c] - sv[c]);
  }
  const double nc = static_cast<double>(rm.size());
  d.d_mean_avg = d.d_mean / nc;
  d.d_var_avg = d.d_var / nc;
  return d;
}

}  // namespace mrshift
