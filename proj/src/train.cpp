#include "mrshift/train.hpp"

#include <cmath>
#include <numeric>

#include "mrshift/error.hpp"
#include "mrshift/rng.hpp"

namespace mrshift {

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"lr_grid", c.lr_grid},
          {"wd_grid", c.wd_grid},
          {"label_index", c.label_index}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.lr_grid = j.value("lr_grid", c.lr_grid);
    c.wd_grid = j.value("wd_grid", c.wd_grid);
    c.label_index = j.value("label_index", c.label_index);
  } catch (const nlohmann::json::exception& e) {
    throw ParamError(std::string("train config: ") + e.what());
  }
  validate(c);
  return c;
}

void validate(const TrainConfig& c) {
  if (!(c.lr >= 0)) throw ParamError("train: lr must be >= 0");
  if (!(c.weight_decay >= 0)) throw ParamError("train: weight_decay must be >= 0");
  if (c.batch_size < 1) throw ParamError("train: batch_size must be >= 1");
  if (c.max_epochs < 1) throw ParamError("train: max_epochs must be >= 1");
}

Tensor make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  const std::size_t h = ds.height(), w = ds.width();
  Tensor batch({indices.size(), 1, h, w});
  auto dst = batch.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = ds.images.at(indices[i]).values();
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(i * h * w));
  }
  return batch;
}

std::vector<std::size_t> batch_labels(const LabeledDataset& ds, std::span<const std::size_t> indices,
                                      std::size_t label_index) {
  std::vector<std::size_t> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(ds.labels.at(i).at(label_index));
  return out;
}

Evaluation evaluate(Model& model, const LabeledDataset& ds, std::size_t label_index,
                    std::size_t batch_size, double threshold) {
  Evaluation ev;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    idx.resize(std::min(batch_size, ds.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const auto probs = positive_probability(model.forward(make_batch(ds, idx), NormMode::Eval));
    ev.scored.scores.insert(ev.scored.scores.end(), probs.begin(), probs.end());
  }
  for (const auto& l : ds.labels) ev.scored.labels.push_back(l.at(label_index));
  ev.auroc = auroc(ev.scored);
  ev.balanced_accuracy = balanced_accuracy(ev.scored, threshold);
  return ev;
}

namespace {

void sgd_step(Model& model, double lr, double wd) {
  for (auto* p : model.parameters()) {
    auto v = p->value.values();
    auto g = p->grad.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * (g[i] + wd * v[i]);
  }
}

}  // namespace

TrainResult train(Model model, const LabeledDataset& train_ds, const LabeledDataset& val_ds,
                  const TrainConfig& cfg) {
  validate(cfg);
  if (train_ds.size() == 0 || val_ds.size() == 0) throw DataError("train: empty dataset");

  TrainResult result;
  result.model = model;
  result.best_val_auroc = -1.0;
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    Rng shuffle = rng.child(epoch);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(cfg.batch_size, order.size() - start));
      const auto labels = batch_labels(train_ds, idx, cfg.label_index);
      model.zero_grad();
      Tensor grad;
      const Tensor logits = model.forward(make_batch(train_ds, idx), NormMode::Train);
      const double loss = softmax_cross_entropy(logits, labels, &grad);
      if (!std::isfinite(loss))
        throw DivergenceError("train: loss became " + std::to_string(loss) + " at epoch " +
                              std::to_string(epoch) + ", batch " + std::to_string(batches));
      model.backward(grad);
      sgd_step(model, cfg.lr, cfg.weight_decay);
      loss_sum += loss;
      ++batches;
    }

    const double val = evaluate(model, val_ds, cfg.label_index).auroc;
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), val});
    if (val > result.best_val_auroc) {
      result.best_val_auroc = val;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

GridSearchResult grid_search(const Model& init, const TrainConfig& cfg,
                             const LabeledDataset& train_ds, const LabeledDataset& val_ds) {
  if (cfg.lr_grid.empty() || cfg.wd_grid.empty()) throw ParamError("grid_search: empty grid");
  GridSearchResult out;
  bool have = false;
  for (double lr : cfg.lr_grid) {
    for (double wd : cfg.wd_grid) {
      TrainConfig c = cfg;
      c.lr = lr;
      c.weight_decay = wd;
      TrainResult r = train(init, train_ds, val_ds, c);
      out.table.push_back({lr, wd, r.best_val_auroc});
      const bool better =
          !have || r.best_val_auroc > out.best.best_val_auroc ||
          (r.best_val_auroc == out.best.best_val_auroc &&
           (lr < out.lr || (lr == out.lr && wd < out.weight_decay)));
      if (better) {
        out.lr = lr;
        out.weight_decay = wd;
        out.best = std::move(r);
        have = true;
      }
    }
  }
  return out;
}

std::size_t adapt_model(Model& model, const LabeledDataset& stream, std::size_t batch_size,
                        double m_a, AdaptWhich which) {
  if (batch_size < 1) throw ParamError("adapt: batch_size must be >= 1");
  for (auto* n : model.norm_layers()) {
    n->scheme().adapt_momentum = m_a;
    n->scheme().adapt_which = which;
  }
  std::size_t batches = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < stream.size(); start += batch_size) {
    idx.resize(std::min(batch_size, stream.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    model.forward(make_batch(stream, idx), NormMode::Adapt);
    ++batches;
  }
  return batches;
}

std::vector<Tensor> capture_norm_inputs(Model& model, const LabeledDataset& ds,
                                        std::size_t norm_index, std::size_t batch_size) {
  auto norms = model.norm_layers();
  if (norm_index >= norms.size())
    throw ParamError("capture: model has " + std::to_string(norms.size()) + " norm layers");
  std::vector<Tensor> sink;
  norms[norm_index]->set_capture(&sink);
  try {
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
      idx.resize(std::min(batch_size, ds.size() - start));
      std::iota(idx.begin(), idx.end(), start);
      model.forward(make_batch(ds, idx), NormMode::Eval);
    }
  } catch (...) {
    norms[norm_index]->set_capture(nullptr);
    throw;
  }
  norms[norm_index]->set_capture(nullptr);
  return sink;
}

}  // namespace mrshift
