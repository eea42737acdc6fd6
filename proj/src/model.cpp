#include "mrshift/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mrshift/error.hpp"
#include "mrshift/tensor_io.hpp"

namespace mrshift {

Model::Model(const Model& o)
    : topology_(o.topology_),
      scheme_(o.scheme_),
      num_classes_(o.num_classes_),
      width_(o.width_),
      features_(o.features_),
      seed_(o.seed_) {
  layers_.reserve(o.layers_.size());
  for (const auto& l : o.layers_) layers_.push_back(l->clone());
}

Model& Model::operator=(const Model& o) {
  if (this != &o) {
    Model tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

Model Model::tiny_preact(const NormScheme& scheme, std::size_t num_classes, std::uint64_t seed,
                         std::size_t width) {
  if (num_classes < 2) throw ParamError("model: at least two classes required");
  Model m;
  m.topology_ = "tiny-preact";
  m.scheme_ = scheme;
  m.num_classes_ = num_classes;
  m.width_ = width;
  m.seed_ = seed;
  Rng rng(seed);

  auto stem = std::make_unique<Conv2d>(1, width, 3, 1, 1, scheme.kind == NormKind::None, "stem");
  Rng r0 = rng.child(0);
  stem->init(r0);
  m.append(std::move(stem));

  auto b1 = std::make_unique<PreactBlock>(width, width, 1, scheme, "block1");
  Rng r1 = rng.child(1);
  b1->init(r1);
  m.append(std::move(b1));

  auto b2 = std::make_unique<PreactBlock>(width, 2 * width, 2, scheme, "block2");
  Rng r2 = rng.child(2);
  b2->init(r2);
  m.append(std::move(b2));

  m.append(std::make_unique<GlobalAvgPool>());

  auto fc = std::make_unique<Linear>(2 * width, num_classes, "fc");
  Rng r3 = rng.child(3);
  fc->init(r3);
  m.append(std::move(fc));
  return m;
}

Model Model::linear(std::size_t features, std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw ParamError("model: at least two classes required");
  Model m;
  m.topology_ = "linear";
  m.scheme_.kind = NormKind::None;
  m.num_classes_ = num_classes;
  m.features_ = features;
  m.seed_ = seed;
  auto fc = std::make_unique<Linear>(features, num_classes, "fc");
  Rng r = Rng(seed).child(0);
  fc->init(r);
  m.append(std::move(fc));
  return m;
}

Model Model::build(const std::string& topology, const NormScheme& scheme, std::size_t num_classes,
                   std::uint64_t seed, std::size_t width, std::size_t features) {
  if (topology == "tiny-preact") return tiny_preact(scheme, num_classes, seed, width);
  if (topology == "linear") return linear(features, num_classes, seed);
  throw ParamError("unknown model topology '" + topology + "'");
}

std::size_t Model::param_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

Tensor Model::forward(const Tensor& batch, NormMode mode) {
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      x = layers_[i]->forward(x, mode);
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + layers_[i]->kind() + "): " + e.what());
    }
  }
  return x;
}

void Model::backward(const Tensor& grad_logits) {
  Tensor g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) l->collect_parameters(out);
  return out;
}

std::vector<NormLayer*> Model::norm_layers() {
  std::vector<NormLayer*> out;
  for (auto& l : layers_) l->collect_norms(out);
  return out;
}

void Model::zero_grad() {
  for (auto* p : parameters())
    for (auto& v : p->grad.values()) v = 0.0;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                             Tensor* grad_logits) {
  if (logits.rank() != 2) throw ShapeError("cross-entropy: logits must be N x K");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ShapeError("cross-entropy: label count mismatch");
  auto z = logits.values();
  if (grad_logits) *grad_logits = Tensor({n, k});
  double total = 0.0;
  std::vector<double> p(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k)
      throw ParamError("cross-entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(k) + ")");
    double mx = z[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[i * k + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[i * k + j] - mx);
    const double lse = mx + std::log(s);
    total += lse - z[i * k + labels[i]];
    if (grad_logits) {
      auto g = grad_logits->values();
      for (std::size_t j = 0; j < k; ++j) {
        const double pj = std::exp(z[i * k + j] - lse);
        g[i * k + j] = (pj - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(n);
      }
    }
  }
  return total / static_cast<double>(n);
}

std::vector<double> positive_probability(const Tensor& logits) {
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  auto z = logits.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = z[i * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z[i * k + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[i * k + j] - mx);
    out[i] = std::exp(z[i * k + 1] - mx) / s;
  }
  return out;
}

LossGrad loss_and_grad(Model& model, const Tensor& batch, std::span<const std::size_t> labels) {
  for (auto l : labels)
    if (l >= model.num_classes())
      throw ParamError("loss_and_grad: label " + std::to_string(l) + " outside [0, " +
                       std::to_string(model.num_classes()) + ")");
  model.zero_grad();
  const Tensor logits = model.forward(batch, NormMode::Train);
  Tensor g;
  LossGrad r;
  r.loss = softmax_cross_entropy(logits, labels, &g);
  model.backward(g);
  for (auto* p : model.parameters()) r.grads.push_back(p->grad);
  return r;
}

// ---------------------------------------------------------------------------
// checkpoints

void save_model(Model& model, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "params");
  fs::create_directories(dir / "normstate");
  nlohmann::json manifest;
  manifest["format"] = "mrshift-checkpoint";
  manifest["version"] = 1;
  manifest["topology"] = model.topology();
  manifest["scheme"] = to_json(model.scheme());
  manifest["num_classes"] = model.num_classes();
  manifest["width"] = model.width();
  manifest["features"] = model.features();
  manifest["init_seed"] = model.init_seed();

  nlohmann::json params = nlohmann::json::array();
  for (auto* p : model.parameters()) {
    const std::string file = "params/" + p->name + ".mrt1";
    save_mrt1(p->value, dir / file);
    params.push_back({{"name", p->name}, {"file", file}, {"dims", p->value.dims()}});
  }
  manifest["params"] = params;

  nlohmann::json norms = nlohmann::json::array();
  for (auto* n : model.norm_layers()) {
    const NormState s = n->state();
    const std::string mean_file = "normstate/" + n->name() + ".running_mean.mrt1";
    const std::string var_file = "normstate/" + n->name() + ".running_var.mrt1";
    save_mrt1(s.running_mean, dir / mean_file);
    save_mrt1(s.running_var, dir / var_file);
    norms.push_back({{"name", n->name()},
                     {"kind", to_string(n->scheme().kind)},
                     {"channels", s.channels()},
                     {"batches_seen", s.batches_seen},
                     {"running_mean", mean_file},
                     {"running_var", var_file}});
  }
  manifest["norm_states"] = norms;

  std::ofstream f(dir / "manifest.json");
  if (!f) throw DataError("checkpoint: cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
}

Model load_model(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw DataError("checkpoint: missing " + (dir / "manifest.json").string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  try {
    if (m.at("format").get<std::string>() != "mrshift-checkpoint")
      throw FormatError("checkpoint: unrecognized manifest format");
    Model model = Model::build(m.at("topology").get<std::string>(), norm_scheme_from_json(m.at("scheme")),
                               m.at("num_classes").get<std::size_t>(), m.at("init_seed").get<std::uint64_t>(),
                               m.at("width").get<std::size_t>(), m.at("features").get<std::size_t>());
    auto params = model.parameters();
    const auto& jp = m.at("params");
    if (jp.size() != params.size()) throw FormatError("checkpoint: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (jp[i].at("name").get<std::string>() != params[i]->name)
        throw FormatError("checkpoint: unexpected parameter " + jp[i].at("name").get<std::string>());
      Tensor t = load_mrt1(dir / jp[i].at("file").get<std::string>());
      if (t.dims() != params[i]->value.dims())
        throw FormatError("checkpoint: shape mismatch for " + params[i]->name);
      params[i]->value = std::move(t);
    }
    auto norms = model.norm_layers();
    const auto& jn = m.at("norm_states");
    if (jn.size() != norms.size()) throw FormatError("checkpoint: norm layer count mismatch");
    for (std::size_t i = 0; i < norms.size(); ++i) {
      NormState s = norms[i]->state();
      s.running_mean = load_mrt1(dir / jn[i].at("running_mean").get<std::string>());
      s.running_var = load_mrt1(dir / jn[i].at("running_var").get<std::string>());
      s.batches_seen = jn[i].at("batches_seen").get<std::uint64_t>();
      norms[i]->set_state(s);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace mrshift
