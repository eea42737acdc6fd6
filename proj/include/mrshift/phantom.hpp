#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "mrshift/tensor.hpp"

namespace mrshift {

enum class Split { Train = 0, Val = 1, Test = 2 };

std::string to_string(Split s);

struct LabeledDataset {
  std::vector<Tensor> images;                    // each H x W, real
  std::vector<std::vector<std::uint8_t>> labels;  // each of length K, values in {0, 1}
  std::size_t num_pathologies = 1;
  Split split = Split::Train;

  std::size_t size() const { return images.size(); }
  std::size_t height() const { return images.empty() ? 0 : images.front().dim(0); }
  std::size_t width() const { return images.empty() ? 0 : images.front().dim(1); }
  // Count of examples with label_k == 1.
  std::size_t positives(std::size_t k = 0) const;
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;
};

// Throws DataError when the structural invariants do not hold.
void validate(const LabeledDataset& ds);

struct PhantomConfig {
  std::size_t size = 64;
  std::size_t n_per_split = 2000;
  double lesion_prob = 0.5;
  double lesion_radius_min = 2.5;
  double lesion_radius_max = 4.0;
  double lesion_contrast_min = 0.3;
  double lesion_contrast_max = 0.6;
  int ellipses_min = 2;
  int ellipses_max = 4;
  double ellipse_intensity_min = 0.2;
  double ellipse_intensity_max = 0.6;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const PhantomConfig& cfg);
PhantomConfig phantom_config_from_json(const nlohmann::json& j);
void validate(const PhantomConfig& cfg);

// n_per_split images drawn from the `split` child stream of cfg.seed, each a
// sum of soft random ellipses plus (with lesion_prob) one small bright disc,
// min-max normalized to [0, 1]. Label = lesion present.
LabeledDataset generate_phantoms(const PhantomConfig& cfg, Split split = Split::Train);

// Writes <dir>/img_NNNNN.mrt1 plus <dir>/labels.csv.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir);

// CSV header `file,label_0,...,label_{K-1}`; file names relative to tensor_dir.
LabeledDataset load_dataset(const std::filesystem::path& tensor_dir,
                            const std::filesystem::path& labels_csv);

struct HoldoutSplit {
  LabeledDataset train, val, test;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
};

// Seeded, label-stratified split into disjoint train/val/test sets.
HoldoutSplit split_holdout(const LabeledDataset& ds, double val_frac, double test_frac,
                           std::uint64_t seed);

}  // namespace mrshift
