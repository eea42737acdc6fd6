#include <doctest.h>

#include <filesystem>

#include "helpers.hpp"
#include "mrshift/error.hpp"
#include "mrshift/layers.hpp"
#include "mrshift/model.hpp"

using namespace mrshift;
using namespace testing;

namespace {

NormScheme scheme_of(NormKind kind, bool affine = true) {
  NormScheme s;
  s.kind = kind;
  s.groups = kind == NormKind::Group ? 4 : 1;
  s.affine = affine;
  return s;
}

struct ReferenceKernels {
  ReferenceKernels() { set_reference_kernels(true); }
  ~ReferenceKernels() { set_reference_kernels(false); }
};

double batch_loss(Model& m, const Tensor& x, const std::vector<std::size_t>& y) {
  return softmax_cross_entropy(m.forward(x, NormMode::Train), y, nullptr);
}

// Worst per-element relative error between analytic and central-difference
// gradients. Each element takes the better of two step sizes so that a step
// straddling a ReLU kink does not count as a mismatch.
double gradient_check(Model& m, const Tensor& x, const std::vector<std::size_t>& y, std::size_t stride = 1) {
  const LossGrad lg = loss_and_grad(m, x, y);
  auto params = m.parameters();
  double worst = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto v = params[p]->value.values();
    for (std::size_t i = 0; i < v.size(); i += stride) {
      const double an = lg.grads[p].values()[i];
      double best = 1e300;
      for (double h : {1e-5, 1e-6}) {
        const double keep = v[i];
        v[i] = keep + h;
        const double lp = batch_loss(m, x, y);
        v[i] = keep - h;
        const double lm = batch_loss(m, x, y);
        v[i] = keep;
        const double fd = (lp - lm) / (2 * h);
        best = std::min(best, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
      }
      worst = std::max(worst, best);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("tiny-preact topology") {
  Model m = Model::tiny_preact(scheme_of(NormKind::Batch), 2, 0);
  CHECK(m.param_count() == 4922);
  CHECK(m.norm_layers().size() == 4);
  const Tensor logits = m.forward(random_real({3, 1, 32, 32}, 1), NormMode::Train);
  CHECK(logits.dims() == Shape{3, 2});
  Model none = Model::tiny_preact(scheme_of(NormKind::None), 2, 0);
  // no affine parameters; every convolution except the shortcut gains a bias
  CHECK(none.param_count() == 4922 - 2 * (8 + 8 + 8 + 16) + (8 + 8 + 8 + 16 + 16));
}

TEST_CASE("fast and reference kernels agree") {
  for (auto k : {NormKind::Batch, NormKind::Group}) {
    Model a = Model::tiny_preact(scheme_of(k), 2, 3);
    Model b = a;
    const Tensor x = random_real({4, 1, 16, 16}, 2);
    const std::vector<std::size_t> y = {0, 1, 1, 0};
    const LossGrad fast = loss_and_grad(a, x, y);
    LossGrad ref;
    {
      ReferenceKernels guard;
      ref = loss_and_grad(b, x, y);
    }
    CHECK(std::abs(fast.loss - ref.loss) < 1e-12);
    for (std::size_t i = 0; i < fast.grads.size(); ++i) CHECK(max_abs_diff(fast.grads[i], ref.grads[i]) < 1e-12);
  }
}

TEST_CASE("parameter gradients match central differences for every scheme") {
  ReferenceKernels guard;
  const Tensor x = random_real({2, 1, 8, 8}, 5);
  const std::vector<std::size_t> y = {1, 0};
  for (auto k : {NormKind::Batch, NormKind::Layer, NormKind::Group, NormKind::Instance, NormKind::None}) {
    CAPTURE(to_string(k));
    Model m = Model::tiny_preact(scheme_of(k), 2, 11);
    // move gamma/beta away from 1/0 so their gradients are exercised off the init point
    Rng rng(4);
    for (auto* p : m.parameters())
      if (p->name.find("gamma") != std::string::npos || p->name.find("beta") != std::string::npos)
        for (auto& v : p->value.values()) v += rng.uniform(-0.3, 0.3);
    CHECK(gradient_check(m, x, y) < 1e-4);
  }
}

TEST_CASE("linear layer forward equals a matrix product") {
  Model m = Model::linear(6, 3, 7);
  const Tensor x = random_real({2, 1, 2, 3}, 8);
  const Tensor logits = m.forward(x, NormMode::Eval);
  auto* lin = dynamic_cast<Linear*>(&m.layer(0));
  REQUIRE(lin);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t k = 0; k < 3; ++k) {
      double acc = lin->bias().value.values()[k];
      for (std::size_t f = 0; f < 6; ++f) acc += lin->weight().value.values()[k * 6 + f] * x.values()[n * 6 + f];
      CHECK(std::abs(logits.values()[n * 3 + k] - acc) < 1e-12);
    }
  CHECK(gradient_check(m, x, {2, 0}) < 1e-6);
}

TEST_CASE("zero weights give zero logits") {
  Model m = Model::tiny_preact(scheme_of(NormKind::Group, false), 2, 1);
  for (auto* p : m.parameters()) p->value = Tensor(p->value.dims());
  const Tensor logits = m.forward(random_real({3, 1, 16, 16}, 9), NormMode::Eval);
  CHECK(logits.max_abs() == 0.0);
}

TEST_CASE("uniform logits give ln 2 and out-of-range labels are rejected") {
  const Tensor z({3, 2});
  Tensor g;
  CHECK(std::abs(softmax_cross_entropy(z, std::vector<std::size_t>{0, 1, 1}, &g) - std::log(2.0)) < 1e-15);
  CHECK(g.values()[0] == doctest::Approx(-0.5 / 3));
  CHECK_THROWS_AS(softmax_cross_entropy(z, std::vector<std::size_t>{0, 2, 1}, nullptr), ParamError);
  Model m = Model::linear(4, 2, 0);
  CHECK_THROWS_AS(loss_and_grad(m, random_real({1, 1, 2, 2}, 1), std::vector<std::size_t>{5}), ParamError);
}

TEST_CASE("dead ReLU path has exactly zero gradient") {
  ReLU relu;
  const Tensor x({1, 4}, std::vector<double>{-1.0, 2.0, -0.5, 0.0});
  relu.forward(x, NormMode::Train);
  const Tensor g = relu.backward(Tensor::full({1, 4}, 1.0));
  CHECK(g.values()[0] == 0.0);
  CHECK(g.values()[1] == 1.0);
  CHECK(g.values()[2] == 0.0);
  CHECK(g.values()[3] == 0.0);
}

TEST_CASE("preact block with zero convolutions and affine off is the identity") {
  NormScheme s = scheme_of(NormKind::Group, false);
  s.groups = 2;
  PreactBlock block(4, 4, 1, s, "b");
  Rng rng(3);
  block.init(rng);
  std::vector<Parameter*> ps;
  block.collect_parameters(ps);
  for (auto* p : ps) p->value = Tensor(p->value.dims());
  const Tensor x = random_normal({2, 4, 6, 6}, 10);
  CHECK(block.forward(x, NormMode::Train).identical(x));
  CHECK_FALSE(block.has_projection());
  PreactBlock down(4, 8, 2, s, "d");
  CHECK(down.has_projection());
  CHECK(down.output_shape({2, 4, 6, 6}) == Shape{2, 8, 3, 3});
}

TEST_CASE("layer gradients in isolation") {
  ReferenceKernels guard;
  auto check_layer = [](Layer& layer, const Tensor& x) {
    const Tensor out = layer.forward(x, NormMode::Train);
    const Tensor w = random_normal(out.dims(), 77);
    auto loss = [&](const Tensor& in) {
      const Tensor o = layer.forward(in, NormMode::Train);
      double acc = 0;
      for (std::size_t i = 0; i < o.size(); ++i) acc += o.values()[i] * w.values()[i];
      return acc;
    };
    layer.forward(x, NormMode::Train);
    std::vector<Parameter*> ps;
    layer.collect_parameters(ps);
    for (auto* p : ps) p->grad = Tensor(p->value.dims());
    const Tensor dx = layer.backward(w);
    double worst = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      Tensor p = x, m = x;
      p.values()[i] += 1e-5;
      m.values()[i] -= 1e-5;
      const double fd = (loss(p) - loss(m)) / 2e-5;
      worst = std::max(worst, std::abs(fd - dx.values()[i]) / std::max({std::abs(fd), std::abs(dx.values()[i]), 1e-6}));
    }
    for (auto* p : ps) {
      auto v = p->value.values();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double keep = v[i];
        v[i] = keep + 1e-5;
        const double lp = loss(x);
        v[i] = keep - 1e-5;
        const double lm = loss(x);
        v[i] = keep;
        const double fd = (lp - lm) / 2e-5;
        const double an = p->grad.values()[i];
        worst = std::max(worst, std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6}));
      }
    }
    return worst;
  };
  Rng rng(1);
  Conv2d conv(2, 3, 3, 2, 1, true, "c");
  conv.init(rng);
  CHECK(check_layer(conv, random_normal({2, 2, 5, 5}, 1)) < 1e-6);
  Conv2d conv1(2, 3, 1, 1, 0, false, "c1");
  conv1.init(rng);
  CHECK(check_layer(conv1, random_normal({2, 2, 4, 4}, 2)) < 1e-6);
  AvgPool2 pool;
  CHECK(check_layer(pool, random_normal({2, 2, 4, 6}, 3)) < 1e-6);
  GlobalAvgPool gap;
  CHECK(check_layer(gap, random_normal({2, 3, 4, 4}, 4)) < 1e-6);
  Linear lin(12, 3, "l");
  lin.init(rng);
  CHECK(check_layer(lin, random_normal({2, 3, 2, 2}, 5)) < 1e-6);
  NormScheme s = scheme_of(NormKind::Batch);
  NormLayer norm(s, 3, "n");
  CHECK(check_layer(norm, random_normal({3, 3, 3, 3}, 6)) < 1e-5);
  PreactBlock block(2, 4, 2, scheme_of(NormKind::Layer), "b");
  block.init(rng);
  CHECK(check_layer(block, random_normal({2, 2, 6, 6}, 7)) < 1e-4);
}

TEST_CASE("permuting a batch permutes the logits") {
  const Tensor x = random_real({4, 1, 16, 16}, 12);
  Tensor perm({4, 1, 16, 16});
  const std::size_t order[4] = {2, 0, 3, 1};
  for (std::size_t i = 0; i < 4; ++i)
    std::copy_n(x.values().begin() + static_cast<std::ptrdiff_t>(order[i] * 256), 256,
                perm.values().begin() + static_cast<std::ptrdiff_t>(i * 256));
  for (auto k : {NormKind::Batch, NormKind::Group, NormKind::Layer}) {
    CAPTURE(to_string(k));
    Model m = Model::tiny_preact(scheme_of(k), 2, 2);
    Model m2 = m;
    const Tensor a = m.forward(x, NormMode::Train);
    const Tensor b = m2.forward(perm, NormMode::Train);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(b.values()[i * 2 + j] - a.values()[order[i] * 2 + j]) < 1e-12);
  }
}

TEST_CASE("per-sample schemes: eval logits of one sample ignore batchmates") {
  Model m = Model::tiny_preact(scheme_of(NormKind::Group), 2, 4);
  const Tensor batch = random_real({3, 1, 16, 16}, 13);
  Tensor one({1, 1, 16, 16});
  std::copy_n(batch.values().begin(), 256, one.values().begin());
  const Tensor a = m.forward(batch, NormMode::Eval);
  const Tensor b = m.forward(one, NormMode::Eval);
  CHECK(std::abs(a.values()[0] - b.values()[0]) < 1e-12);
  CHECK(std::abs(a.values()[1] - b.values()[1]) < 1e-12);
}

TEST_CASE("shape errors name the failing layer") {
  Model m = Model::linear(16, 2, 0);
  try {
    m.forward(random_real({1, 1, 3, 3}, 1), NormMode::Eval);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
  Model t = Model::tiny_preact(scheme_of(NormKind::Batch), 2, 0);
  CHECK_THROWS_AS(t.forward(random_real({1, 2, 8, 8}, 1), NormMode::Train), ShapeError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = std::filesystem::temp_directory_path() / "mrshift_test_ckpt";
  std::filesystem::remove_all(dir);
  Model m = Model::tiny_preact(scheme_of(NormKind::Batch), 2, 5);
  m.forward(random_real({4, 1, 16, 16}, 3), NormMode::Train);  // populate running stats
  save_model(m, dir);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "params"));
  CHECK(std::filesystem::exists(dir / "normstate"));
  Model back = load_model(dir);
  auto pa = m.parameters(), pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.identical(pb[i]->value));
  auto na = m.norm_layers(), nb = back.norm_layers();
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(na[i]->state().running_mean.identical(nb[i]->state().running_mean));
    CHECK(na[i]->state().running_var.identical(nb[i]->state().running_var));
    CHECK(na[i]->state().batches_seen == nb[i]->state().batches_seen);
  }
  const Tensor x = random_real({2, 1, 16, 16}, 4);
  CHECK(m.forward(x, NormMode::Eval).identical(back.forward(x, NormMode::Eval)));
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(load_model(dir), DataError);
}

TEST_CASE("model copies are independent") {
  Model a = Model::tiny_preact(scheme_of(NormKind::Batch), 2, 6);
  Model b = a;
  b.parameters()[0]->value.values()[0] += 1.0;
  CHECK(a.parameters()[0]->value.values()[0] != b.parameters()[0]->value.values()[0]);
  b.forward(random_real({2, 1, 8, 8}, 1), NormMode::Train);
  CHECK(a.norm_layers()[0]->state().batches_seen == 0);
}
