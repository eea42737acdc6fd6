#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "mrshift/metrics.hpp"
#include "mrshift/model.hpp"
#include "mrshift/phantom.hpp"

namespace mrshift {

struct TrainConfig {
  double lr = 1e-2;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  std::vector<double> lr_grid = {1e-5, 1e-4, 1e-3, 1e-2};
  std::vector<double> wd_grid = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
  // Which label column the binary classifier is trained on.
  std::size_t label_index = 0;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
void validate(const TrainConfig& c);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_auroc = 0;
};

struct TrainResult {
  Model model;  // parameters from the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_auroc = 0;
};

// Builds an N x 1 x H x W batch from the given examples.
Tensor make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices);
std::vector<std::size_t> batch_labels(const LabeledDataset& ds, std::span<const std::size_t> indices,
                                      std::size_t label_index);

// Minibatch SGD with decoupled weight decay, theta -= lr * (g + wd * theta).
// After every epoch the validation AUROC is measured; the best model is kept
// and training stops after `patience` epochs without improvement.
// Throws DivergenceError if the loss becomes NaN or infinite.
TrainResult train(Model model, const LabeledDataset& train_ds, const LabeledDataset& val_ds,
                  const TrainConfig& cfg);

struct GridPoint {
  double lr = 0;
  double weight_decay = 0;
  double val_auroc = 0;
};

struct GridSearchResult {
  double lr = 0;
  double weight_decay = 0;
  TrainResult best;
  std::vector<GridPoint> table;
};

// One training run per (lr, wd) from the same initial model; the winner has
// the highest validation AUROC, ties going to the smaller lr, then smaller wd.
GridSearchResult grid_search(const Model& init, const TrainConfig& cfg,
                             const LabeledDataset& train_ds, const LabeledDataset& val_ds);

struct Evaluation {
  ScoredLabels scored;
  double auroc = 0;
  double balanced_accuracy = 0;
};

// Positive-class probabilities in `mode` (Eval for deployment).
Evaluation evaluate(Model& model, const LabeledDataset& ds, std::size_t label_index = 0,
                    std::size_t batch_size = 64, double threshold = 0.5);

// Model-level AdaBN: forwards `stream` in batches with every batch-norm layer
// in Adapt mode, so each layer's running statistics track the stream through
// an EMA of weight m_a. Returns the number of batches seen.
std::size_t adapt_model(Model& model, const LabeledDataset& stream, std::size_t batch_size,
                        double m_a, AdaptWhich which = AdaptWhich::Both);

// Inputs reaching norm layer `norm_index` (forward order) for every batch of
// `ds`, in eval mode.
std::vector<Tensor> capture_norm_inputs(Model& model, const LabeledDataset& ds,
                                        std::size_t norm_index, std::size_t batch_size = 64);

}  // namespace mrshift
