#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mrshift/artifacts.hpp"
#include "mrshift/model.hpp"
#include "mrshift/phantom.hpp"
#include "mrshift/train.hpp"

namespace mrshift {

// One row of a sweep. `level` is -1 for the clean baseline.
struct SweepRow {
  std::string scheme;
  std::string artifact;  // "none" for clean rows
  int level = -1;
  double intensity = 0;
  std::uint64_t seed = 0;
  double auroc = 0;
  double balanced_accuracy = 0;
  std::optional<double> d_mean;  // batch-norm models only
  std::optional<double> d_var;
  double wall_time = 0;  // seconds; excluded from the main CSV
  std::size_t batch_size = 0;  // filled by the batch-size study
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// Everything needed to reproduce a run. Parsed from a single JSON file.
struct ExperimentConfig {
  // Data: a phantom configuration, or an external directory with labels.csv.
  std::optional<PhantomConfig> phantom;
  std::filesystem::path data_dir;
  double val_frac = 0.15;
  double test_frac = 0.15;
  std::uint64_t split_seed = 0;

  std::string topology = "tiny-preact";
  std::size_t width = 8;
  // Scheme names: batch, group, layer, instance, none, adabn (adapts the batch models).
  std::vector<std::string> schemes = {"batch", "group", "layer", "adabn"};
  NormScheme norm;  // eps, affine, momentum and group count shared by all schemes
  std::size_t adapt_batch_size = 32;

  TrainConfig train;
  bool grid_search = false;

  std::vector<ArtifactKind> artifacts = {ArtifactKind::Spike, ArtifactKind::Rician,
                                         ArtifactKind::BiasField, ArtifactKind::Ghosting,
                                         ArtifactKind::RigidMotion};
  // Indices into each artifact's default grid; empty means every level.
  std::vector<int> levels;
  std::size_t n_seeds = 5;
  std::uint64_t seed = 0;
  std::size_t drift_layer = 0;  // index among norm layers, forward order
  double threshold = 0.5;
  std::size_t jobs = 1;

  std::filesystem::path output_dir = "out";
  std::filesystem::path checkpoint_dir;  // defaults to output_dir / "checkpoints"
  bool save_adapted = false;
  // When false, a missing checkpoint is an error instead of a training run.
  bool train_missing = true;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& c);

NormScheme scheme_for(const ExperimentConfig& c, const std::string& name);

// Generates or loads the dataset and returns the stratified split.
HoldoutSplit prepare_data(const ExperimentConfig& c);

// Per-image artifact seed for (run seed, artifact, level, image).
std::uint64_t corruption_seed(std::uint64_t base, ArtifactKind kind, int level, std::uint64_t run_seed,
                              std::size_t image);
LabeledDataset corrupt_dataset(const LabeledDataset& ds, const ArtifactParams& params,
                               std::uint64_t base, ArtifactKind kind, int level,
                               std::uint64_t run_seed);

// Trains (or loads, when a checkpoint already exists) one model per
// non-AdaBN scheme and seed.
std::filesystem::path checkpoint_path(const ExperimentConfig& c, const std::string& scheme,
                                      std::uint64_t seed);
Model obtain_model(const ExperimentConfig& c, const std::string& scheme, std::uint64_t seed,
                   const HoldoutSplit& data, std::vector<EpochRecord>* history = nullptr);

// scheme x artifact x level x seed grid plus one clean row per scheme x seed.
SweepResult run_sweep(const ExperimentConfig& c);
SweepResult run_sweep(const ExperimentConfig& c, const HoldoutSplit& data);

// Trains batch-norm models with each batch size and sweeps them.
SweepResult run_batch_size_study(const ExperimentConfig& c, const std::vector<std::size_t>& sizes);

struct DriftRow {
  std::size_t layer = 0;
  std::string norm_kind;
  std::string artifact;
  int level = -1;
  double intensity = 0;
  DriftResult drift;
};

// Drift of norm layer `layer` between its running statistics and features
// of `ds` (clean, then each artifact level).
std::vector<DriftRow> run_drift(Model& model, const LabeledDataset& ds, std::size_t layer,
                                const std::vector<ArtifactKind>& artifacts, std::uint64_t seed);

struct AdaptRow {
  std::string which;
  std::string artifact;
  int level = -1;
  double intensity = 0;
  double auroc = 0;
  double balanced_accuracy = 0;
};

std::vector<AdaptRow> run_adapt_partial(const Model& model, const LabeledDataset& ds,
                                        const std::vector<AdaptWhich>& which,
                                        const std::vector<ArtifactKind>& artifacts,
                                        std::uint64_t seed, std::size_t batch_size, double m_a);

// CSV writers. Every file starts with "# schema=1".
std::string sweep_csv(const SweepResult& r, bool with_batch_size = false);
std::string sweep_timing_csv(const SweepResult& r);
std::string drift_csv(const std::vector<DriftRow>& rows);
std::string adapt_csv(const std::vector<AdaptRow>& rows);
std::string history_csv(const std::vector<EpochRecord>& h);
void write_text(const std::filesystem::path& path, const std::string& text);

// Applies `specs` to every image of the dataset in `in_dir` and writes the
// result plus manifest.json to `out_dir`. Spec seeds are expanded per image
// (child stream i of the spec seed). An empty list copies the files byte for byte.
nlohmann::json corrupt_directory(const std::filesystem::path& in_dir,
                                 const std::vector<ArtifactSpec>& specs,
                                 const std::filesystem::path& out_dir);

// Runs fn(0..n-1) on up to `jobs` threads.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace mrshift
