#include <doctest.h>

#include "helpers.hpp"
#include "mrshift/error.hpp"
#include "mrshift/train.hpp"

using namespace mrshift;
using namespace testing;

namespace {

// Two features; label 1 iff 2*f0 - f1 > 0.2, with a margin kept clear.
LabeledDataset toy(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  LabeledDataset ds;
  while (ds.size() < n) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    const double s = 2 * a - b - 0.2;
    if (std::abs(s) < 0.1) continue;
    ds.images.push_back(Tensor({1, 2}, std::vector<double>{a, b}));
    ds.labels.push_back({static_cast<std::uint8_t>(s > 0)});
  }
  return ds;
}

double accuracy(Model& m, const LabeledDataset& ds) {
  const Evaluation ev = evaluate(m, ds);
  std::size_t right = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    right += (ev.scored.scores[i] >= 0.5) == (ds.labels[i][0] == 1);
  return static_cast<double>(right) / static_cast<double>(ds.size());
}

TrainConfig toy_config() {
  TrainConfig c;
  c.lr = 0.5;
  c.weight_decay = 0;
  c.batch_size = 16;
  c.max_epochs = 200;
  c.patience = 1000;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("lr = 0 leaves every parameter unchanged") {
  const LabeledDataset tr = toy(64, 1), va = toy(32, 2);
  const Model init = Model::linear(2, 2, 4);
  TrainConfig c = toy_config();
  c.lr = 0;
  c.max_epochs = 3;
  c.weight_decay = 0.1;
  TrainResult r = train(init, tr, va, c);
  Model before = init;
  auto a = before.parameters(), b = r.model.parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value.identical(b[i]->value));
}

TEST_CASE("separable toy task reaches 99% training accuracy") {
  const LabeledDataset tr = toy(200, 5), va = toy(50, 6);
  // One epoch per call so the best-epoch restore does not mask later progress.
  TrainConfig c = toy_config();
  c.max_epochs = 1;
  Model m = Model::linear(2, 2, 7);
  double best = 0;
  for (std::uint64_t e = 0; e < 200 && best < 0.99; ++e) {
    c.seed = e;
    m = train(m, tr, va, c).model;
    best = std::max(best, accuracy(m, tr));
  }
  CHECK(best >= 0.99);
}

TEST_CASE("full-batch training loss does not increase") {
  const LabeledDataset tr = toy(100, 8), va = toy(30, 9);
  for (double lr : {0.05, 0.2, 1.0}) {
    CAPTURE(lr);
    TrainConfig c = toy_config();
    c.lr = lr;
    c.batch_size = tr.size();
    c.max_epochs = 100;
    const TrainResult r = train(Model::linear(2, 2, 10), tr, va, c);
    for (std::size_t e = 1; e < r.history.size(); ++e)
      CHECK(r.history[e].train_loss <= r.history[e - 1].train_loss + 1e-6);
  }
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  PhantomConfig pc;
  pc.size = 16;
  pc.n_per_split = 64;
  pc.lesion_radius_max = 2.5;
  const LabeledDataset tr = generate_phantoms(pc, Split::Train), va = generate_phantoms(pc, Split::Val);
  NormScheme s;
  s.kind = NormKind::Batch;
  TrainConfig c;
  c.lr = 0.05;
  c.max_epochs = 2;
  c.seed = 11;
  const Model init = Model::tiny_preact(s, 2, 12);
  const TrainResult a = train(init, tr, va, c);
  const TrainResult b = train(init, tr, va, c);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].val_auroc == b.history[e].val_auroc);
  }
  Model ma = a.model, mb = b.model;
  auto pa = ma.parameters(), pb = mb.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.identical(pb[i]->value));
}

TEST_CASE("early stopping keeps the best epoch") {
  const LabeledDataset tr = toy(100, 13), va = toy(40, 14);
  TrainConfig c = toy_config();
  c.patience = 2;
  const TrainResult r = train(Model::linear(2, 2, 15), tr, va, c);
  // Validation AUROC saturates early, so training stops patience epochs later.
  CHECK(r.history.size() == r.best_epoch + 2);
  double best = 0;
  for (const auto& h : r.history) best = std::max(best, h.val_auroc);
  CHECK(r.best_val_auroc == best);
  CHECK(r.history[r.best_epoch - 1].val_auroc == best);
}

TEST_CASE("grid search covers the grid and breaks ties toward small values") {
  const LabeledDataset tr = toy(80, 16), va = toy(30, 17);
  TrainConfig c = toy_config();
  c.max_epochs = 20;
  c.lr_grid = {0.5, 0.1};
  c.wd_grid = {1e-3, 1e-4};
  const GridSearchResult g = grid_search(Model::linear(2, 2, 18), c, tr, va);
  CHECK(g.table.size() == 4);
  for (const auto& p : g.table) CHECK(p.val_auroc == 1.0);
  CHECK(g.lr == 0.1);
  CHECK(g.weight_decay == 1e-4);
  c.lr_grid.clear();
  CHECK_THROWS_AS(grid_search(Model::linear(2, 2, 18), c, tr, va), ParamError);
}

TEST_CASE("divergence and bad inputs are reported") {
  const LabeledDataset tr = toy(40, 19), va = toy(20, 20);
  TrainConfig c = toy_config();
  c.lr = 1e300;
  c.weight_decay = 0.1;
  c.max_epochs = 5;
  CHECK_THROWS_AS(train(Model::linear(2, 2, 21), tr, va, c), DivergenceError);
  CHECK_THROWS_AS(train(Model::linear(2, 2, 21), tr, LabeledDataset{}, toy_config()), DataError);
  TrainConfig bad = toy_config();
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(Model::linear(2, 2, 21), tr, va, bad), ParamError);
  TrainConfig lbl = toy_config();
  lbl.label_index = 1;
  CHECK_THROWS(train(Model::linear(2, 2, 21), tr, va, lbl));
}

TEST_CASE("AdaBN on a model changes only batch-norm running statistics") {
  PhantomConfig pc;
  pc.size = 16;
  pc.n_per_split = 40;
  pc.lesion_radius_max = 2.5;
  const LabeledDataset ds = generate_phantoms(pc);
  NormScheme s;
  s.kind = NormKind::Batch;
  Model m = Model::tiny_preact(s, 2, 1);
  m.forward(make_batch(ds, std::vector<std::size_t>{0, 1, 2, 3}), NormMode::Train);
  Model adapted = m;
  CHECK(adapt_model(adapted, ds, 8, 0.1) == 5);
  auto pa = m.parameters(), pb = adapted.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.identical(pb[i]->value));
  auto na = m.norm_layers(), nb = adapted.norm_layers();
  for (std::size_t i = 0; i < na.size(); ++i)
    CHECK_FALSE(na[i]->state().running_mean.identical(nb[i]->state().running_mean));

  NormScheme g;
  g.kind = NormKind::Group;
  g.groups = 4;
  Model gm = Model::tiny_preact(g, 2, 1);
  Model ga = gm;
  adapt_model(ga, ds, 8, 0.1);
  const Tensor x = make_batch(ds, std::vector<std::size_t>{5, 6});
  CHECK(gm.forward(x, NormMode::Eval).identical(ga.forward(x, NormMode::Eval)));
}

TEST_CASE("captured norm inputs cover the dataset") {
  PhantomConfig pc;
  pc.size = 16;
  pc.n_per_split = 20;
  pc.lesion_radius_max = 2.5;
  const LabeledDataset ds = generate_phantoms(pc);
  NormScheme s;
  s.kind = NormKind::Batch;
  Model m = Model::tiny_preact(s, 2, 1);
  m.forward(make_batch(ds, std::vector<std::size_t>{0, 1, 2, 3}), NormMode::Train);
  const auto feats = capture_norm_inputs(m, ds, 0, 8);
  REQUIRE(feats.size() == 3);
  CHECK(feats[0].dims() == Shape{8, 8, 16, 16});
  CHECK(feats[2].dim(0) == 4);
  CHECK_THROWS(capture_norm_inputs(m, ds, 9));
}
