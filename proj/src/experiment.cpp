#include "mrshift/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "mrshift/error.hpp"
#include "mrshift/rng.hpp"
#include "mrshift/tensor_io.hpp"

namespace mrshift {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// config

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  if (c.phantom) j["phantom"] = to_json(*c.phantom);
  if (!c.data_dir.empty()) j["data_dir"] = c.data_dir.string();
  j["val_frac"] = c.val_frac;
  j["test_frac"] = c.test_frac;
  j["split_seed"] = c.split_seed;
  j["topology"] = c.topology;
  j["width"] = c.width;
  j["schemes"] = c.schemes;
  nlohmann::json norm = to_json(c.norm);
  norm.erase("kind");
  j["norm"] = norm;
  j["adapt_batch_size"] = c.adapt_batch_size;
  j["train"] = to_json(c.train);
  j["grid_search"] = c.grid_search;
  std::vector<std::string> kinds;
  for (auto k : c.artifacts) kinds.push_back(to_string(k));
  j["artifacts"] = kinds;
  j["levels"] = c.levels;
  j["n_seeds"] = c.n_seeds;
  j["seed"] = c.seed;
  j["drift_layer"] = c.drift_layer;
  j["threshold"] = c.threshold;
  j["jobs"] = c.jobs;
  j["output_dir"] = c.output_dir.string();
  if (!c.checkpoint_dir.empty()) j["checkpoint_dir"] = c.checkpoint_dir.string();
  j["save_adapted"] = c.save_adapted;
  j["train_missing"] = c.train_missing;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "phantom",  "data_dir",  "val_frac",    "test_frac",   "split_seed",   "topology",
      "width",    "schemes",   "norm",        "adapt_batch_size", "train",   "grid_search",
      "artifacts", "levels",   "n_seeds",     "seed",        "drift_layer",  "threshold",
      "jobs",     "output_dir", "checkpoint_dir", "save_adapted", "train_missing"};
  if (!j.is_object()) throw ParamError("experiment config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ParamError("experiment config: unknown key '" + key + "'");

  ExperimentConfig c;
  c.norm.groups = 4;
  try {
    if (j.contains("phantom")) c.phantom = phantom_config_from_json(j.at("phantom"));
    if (j.contains("data_dir")) c.data_dir = j.at("data_dir").get<std::string>();
    if (!c.phantom && c.data_dir.empty()) c.phantom = PhantomConfig{};
    c.val_frac = j.value("val_frac", c.val_frac);
    c.test_frac = j.value("test_frac", c.test_frac);
    c.split_seed = j.value("split_seed", c.split_seed);
    c.topology = j.value("topology", c.topology);
    c.width = j.value("width", c.width);
    c.schemes = j.value("schemes", c.schemes);
    if (j.contains("norm")) {
      nlohmann::json n = j.at("norm");
      n["kind"] = "batch";
      if (!n.contains("groups")) n["groups"] = c.norm.groups;
      c.norm = norm_scheme_from_json(n);
    }
    c.adapt_batch_size = j.value("adapt_batch_size", c.adapt_batch_size);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    c.grid_search = j.value("grid_search", c.grid_search);
    if (j.contains("artifacts")) {
      c.artifacts.clear();
      for (const auto& k : j.at("artifacts")) c.artifacts.push_back(artifact_kind_from_string(k.get<std::string>()));
    }
    c.levels = j.value("levels", c.levels);
    c.n_seeds = j.value("n_seeds", c.n_seeds);
    c.seed = j.value("seed", c.seed);
    c.drift_layer = j.value("drift_layer", c.drift_layer);
    c.threshold = j.value("threshold", c.threshold);
    c.jobs = j.value("jobs", c.jobs);
    c.output_dir = j.value("output_dir", c.output_dir.string());
    if (j.contains("checkpoint_dir")) c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
    c.save_adapted = j.value("save_adapted", c.save_adapted);
    c.train_missing = j.value("train_missing", c.train_missing);
  } catch (const nlohmann::json::exception& e) {
    throw ParamError(std::string("experiment config: ") + e.what());
  }
  validate(c);
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ParamError("config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

void validate(const ExperimentConfig& c) {
  if (c.n_seeds < 1) throw ParamError("experiment: n_seeds must be >= 1");
  if (c.jobs < 1) throw ParamError("experiment: jobs must be >= 1");
  if (c.adapt_batch_size < 1) throw ParamError("experiment: adapt_batch_size must be >= 1");
  if (c.val_frac < 0 || c.test_frac < 0 || c.val_frac + c.test_frac >= 1)
    throw ParamError("experiment: val_frac and test_frac must be >= 0 with sum < 1");
  if (c.schemes.empty()) throw ParamError("experiment: no schemes");
  for (const auto& s : c.schemes) scheme_for(c, s);
  for (int l : c.levels) {
    for (auto k : c.artifacts) {
      const auto n = default_grid(k).levels.size();
      if (l < 0 || static_cast<std::size_t>(l) >= n)
        throw ParamError("experiment: level " + std::to_string(l) + " outside the " + to_string(k) +
                         " grid (0.." + std::to_string(n - 1) + ")");
    }
  }
  if (c.topology != "tiny-preact" && c.topology != "linear")
    throw ParamError("experiment: unknown topology '" + c.topology + "'");
  validate(c.train);
}

NormScheme scheme_for(const ExperimentConfig& c, const std::string& name) {
  NormScheme s = c.norm;
  s.kind = norm_kind_from_string(name == "adabn" ? "batch" : name);
  return s;
}

// ---------------------------------------------------------------------------
// data

HoldoutSplit prepare_data(const ExperimentConfig& c) {
  LabeledDataset ds;
  if (!c.data_dir.empty()) {
    if (!fs::is_directory(c.data_dir)) throw DataError("data_dir " + c.data_dir.string() + " does not exist");
    ds = load_dataset(c.data_dir, c.data_dir / "labels.csv");
  } else {
    ds = generate_phantoms(c.phantom.value_or(PhantomConfig{}), Split::Train);
  }
  if (c.train.label_index >= ds.num_pathologies)
    throw ParamError("experiment: label_index outside the dataset's label columns");
  return split_holdout(ds, c.val_frac, c.test_frac, c.split_seed);
}

std::uint64_t corruption_seed(std::uint64_t base, ArtifactKind kind, int level, std::uint64_t run_seed,
                              std::size_t image) {
  return Rng(base)
      .child(0x61727466ULL + static_cast<std::uint64_t>(kind))
      .child(static_cast<std::uint64_t>(level))
      .child(run_seed)
      .child(image)
      .seed();
}

LabeledDataset corrupt_dataset(const LabeledDataset& ds, const ArtifactParams& params, std::uint64_t base,
                               ArtifactKind kind, int level, std::uint64_t run_seed) {
  LabeledDataset out = ds;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const ArtifactSpec spec{params, corruption_seed(base, kind, level, run_seed, i)};
    out.images[i] = apply(spec, ds.images[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// models

namespace {

std::uint64_t init_seed(const ExperimentConfig& c, std::uint64_t s) { return Rng(c.seed).child(2 * s).seed(); }
std::uint64_t shuffle_seed(const ExperimentConfig& c, std::uint64_t s) { return Rng(c.seed).child(2 * s + 1).seed(); }

// Everything a trained checkpoint depends on; stored next to it so a stale
// checkpoint is detected instead of silently reused.
nlohmann::json training_provenance(const ExperimentConfig& c, const std::string& scheme, std::uint64_t seed) {
  nlohmann::json j;
  j["scheme"] = to_json(scheme_for(c, scheme));
  j["topology"] = c.topology;
  j["width"] = c.width;
  j["train"] = to_json(c.train);
  j["train"]["seed"] = shuffle_seed(c, seed);
  j["grid_search"] = c.grid_search;
  j["init_seed"] = init_seed(c, seed);
  if (c.phantom) j["phantom"] = to_json(*c.phantom);
  if (!c.data_dir.empty()) j["data_dir"] = fs::absolute(c.data_dir).lexically_normal().string();
  j["split"] = {c.val_frac, c.test_frac, c.split_seed};
  return j;
}

}  // namespace

fs::path checkpoint_path(const ExperimentConfig& c, const std::string& scheme, std::uint64_t seed) {
  const fs::path dir = c.checkpoint_dir.empty() ? c.output_dir / "checkpoints" : c.checkpoint_dir;
  std::string name = scheme == "adabn" ? "batch" : scheme;
  if (scheme == "batch" || scheme == "adabn") name += "_bs" + std::to_string(c.train.batch_size);
  return dir / (name + "_seed" + std::to_string(seed));
}

Model obtain_model(const ExperimentConfig& c, const std::string& scheme, std::uint64_t seed,
                   const HoldoutSplit& data, std::vector<EpochRecord>* history) {
  const fs::path dir = checkpoint_path(c, scheme, seed);
  const nlohmann::json prov = training_provenance(c, scheme, seed);
  if (fs::exists(dir / "manifest.json")) {
    std::ifstream f(dir / "training.json");
    nlohmann::json stored;
    try {
      if (f) stored = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception&) {
    }
    if (stored != prov)
      throw DataError("checkpoint " + dir.string() +
                      " was trained with a different configuration; remove it or choose another checkpoint_dir");
    return load_model(dir);
  }
  if (!c.train_missing) throw DataError("missing checkpoint " + dir.string());

  const std::size_t features = data.train.height() * data.train.width();
  Model init = Model::build(c.topology, scheme_for(c, scheme), 2, init_seed(c, seed), c.width, features);
  TrainConfig tc = c.train;
  tc.seed = shuffle_seed(c, seed);
  TrainResult r;
  if (c.grid_search) {
    r = grid_search(init, tc, data.train, data.val).best;
  } else {
    r = train(init, data.train, data.val, tc);
  }
  if (history) *history = r.history;
  save_model(r.model, dir);
  write_text(dir / "history.csv", history_csv(r.history));
  write_text(dir / "training.json", prov.dump(2) + "\n");
  return std::move(r.model);
}

// ---------------------------------------------------------------------------
// parallel helper

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first_error) first_error = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// sweep

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct TestCase {
  std::string artifact = "none";
  ArtifactKind kind = ArtifactKind::Spike;
  int level = -1;
  double intensity = 0;
  std::uint64_t seed = 0;
};

bool row_less(const SweepRow& a, const SweepRow& b) {
  return std::tie(a.batch_size, a.scheme, a.artifact, a.level, a.seed) <
         std::tie(b.batch_size, b.scheme, b.artifact, b.level, b.seed);
}

std::vector<std::string> trained_schemes(const ExperimentConfig& c) {
  std::vector<std::string> out;
  for (const auto& s : c.schemes) {
    const std::string t = s == "adabn" ? "batch" : s;
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  return out;
}

void record_drift(Model& model, const LabeledDataset& ds, std::size_t layer, SweepRow& row) {
  auto norms = model.norm_layers();
  if (norms.empty() || model.scheme().kind != NormKind::Batch) return;
  if (layer >= norms.size()) throw ParamError("drift_layer outside the model's norm layers");
  const auto stream = capture_norm_inputs(model, ds, layer);
  const DriftResult d = bn_drift(norms[layer]->state(), stream);
  row.d_mean = d.d_mean;
  row.d_var = d.d_var;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& c) { return run_sweep(c, prepare_data(c)); }

SweepResult run_sweep(const ExperimentConfig& c, const HoldoutSplit& data) {
  validate(c);
  const auto schemes = trained_schemes(c);

  // Train or load one model per (scheme, seed).
  std::vector<Model> models(schemes.size() * c.n_seeds);
  parallel_for(models.size(), c.jobs, [&](std::size_t i) {
    models[i] = obtain_model(c, schemes[i / c.n_seeds], i % c.n_seeds, data);
  });
  auto model_for = [&](const std::string& scheme, std::uint64_t seed) -> const Model& {
    const std::string t = scheme == "adabn" ? "batch" : scheme;
    const auto pos = static_cast<std::size_t>(std::find(schemes.begin(), schemes.end(), t) - schemes.begin());
    return models[pos * c.n_seeds + seed];
  };

  std::vector<TestCase> cases;
  for (std::uint64_t s = 0; s < c.n_seeds; ++s) cases.push_back({"none", ArtifactKind::Spike, -1, 0, s});
  for (auto kind : c.artifacts) {
    const IntensityGrid grid = default_grid(kind);
    std::vector<int> levels = c.levels;
    if (levels.empty())
      for (std::size_t l = 0; l < grid.levels.size(); ++l) levels.push_back(static_cast<int>(l));
    for (int l : levels)
      for (std::uint64_t s = 0; s < c.n_seeds; ++s)
        cases.push_back({to_string(kind), kind, l, grid.labels.at(static_cast<std::size_t>(l)), s});
  }

  std::vector<std::vector<SweepRow>> per_case(cases.size());
  parallel_for(cases.size(), c.jobs, [&](std::size_t ci) {
    const TestCase& tc = cases[ci];
    const LabeledDataset test =
        tc.level < 0 ? data.test
                     : corrupt_dataset(data.test, default_grid(tc.kind).levels.at(static_cast<std::size_t>(tc.level)),
                                       c.seed, tc.kind, tc.level, tc.seed);
    for (const auto& scheme : c.schemes) {
      const auto t0 = Clock::now();
      Model model = model_for(scheme, tc.seed);
      if (scheme == "adabn") {
        adapt_model(model, test, c.adapt_batch_size, c.norm.adapt_momentum, AdaptWhich::Both);
        if (c.save_adapted) {
          fs::path dir = checkpoint_path(c, scheme, tc.seed);
          dir = dir.parent_path() / ("adabn_" + dir.filename().string() + "_" + tc.artifact +
                                     (tc.level < 0 ? std::string("_clean") : "_l" + std::to_string(tc.level)));
          save_model(model, dir);
        }
      }
      const Evaluation ev = evaluate(model, test, c.train.label_index, 64, c.threshold);
      SweepRow row;
      row.scheme = scheme;
      row.artifact = tc.artifact;
      row.level = tc.level;
      row.intensity = tc.intensity;
      row.seed = tc.seed;
      row.auroc = ev.auroc;
      row.balanced_accuracy = ev.balanced_accuracy;
      row.batch_size = c.train.batch_size;
      record_drift(model, test, c.drift_layer, row);
      row.wall_time = seconds_since(t0);
      per_case[ci].push_back(std::move(row));
    }
  });

  SweepResult out;
  for (auto& rows : per_case)
    for (auto& r : rows) out.rows.push_back(std::move(r));
  std::sort(out.rows.begin(), out.rows.end(), row_less);
  return out;
}

SweepResult run_batch_size_study(const ExperimentConfig& c, const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) throw ParamError("batch-size study: no sizes");
  const HoldoutSplit data = prepare_data(c);
  SweepResult out;
  for (auto bs : sizes) {
    ExperimentConfig cc = c;
    cc.train.batch_size = bs;
    cc.schemes = {"batch"};
    SweepResult r = run_sweep(cc, data);
    for (auto& row : r.rows) out.rows.push_back(std::move(row));
  }
  std::sort(out.rows.begin(), out.rows.end(), row_less);
  return out;
}

// ---------------------------------------------------------------------------
// drift and partial adaptation

std::vector<DriftRow> run_drift(Model& model, const LabeledDataset& ds, std::size_t layer,
                                const std::vector<ArtifactKind>& artifacts, std::uint64_t seed) {
  auto norms = model.norm_layers();
  if (layer >= norms.size())
    throw ParamError("drift: layer " + std::to_string(layer) + " outside the model's " +
                     std::to_string(norms.size()) + " norm layers");
  if (norms[layer]->scheme().kind != NormKind::Batch)
    throw ParamError("drift: norm layer " + std::to_string(layer) + " is not batch norm");

  std::vector<DriftRow> rows;
  auto add = [&](const LabeledDataset& d, const std::string& artifact, int level, double intensity) {
    const auto stream = capture_norm_inputs(model, d, layer);
    DriftRow r;
    r.layer = layer;
    r.norm_kind = to_string(norms[layer]->scheme().kind);
    r.artifact = artifact;
    r.level = level;
    r.intensity = intensity;
    r.drift = bn_drift(norms[layer]->state(), stream);
    rows.push_back(r);
  };
  add(ds, "none", -1, 0.0);
  for (auto kind : artifacts) {
    const IntensityGrid grid = default_grid(kind);
    for (std::size_t l = 0; l < grid.levels.size(); ++l)
      add(corrupt_dataset(ds, grid.levels[l], seed, kind, static_cast<int>(l), 0), to_string(kind),
          static_cast<int>(l), grid.labels[l]);
  }
  return rows;
}

std::vector<AdaptRow> run_adapt_partial(const Model& model, const LabeledDataset& ds,
                                        const std::vector<AdaptWhich>& which,
                                        const std::vector<ArtifactKind>& artifacts, std::uint64_t seed,
                                        std::size_t batch_size, double m_a) {
  std::vector<AdaptRow> rows;
  auto add = [&](const LabeledDataset& d, const std::string& artifact, int level, double intensity) {
    {
      Model m = model;
      const Evaluation ev = evaluate(m, d);
      rows.push_back({"none", artifact, level, intensity, ev.auroc, ev.balanced_accuracy});
    }
    for (auto w : which) {
      Model m = model;
      adapt_model(m, d, batch_size, m_a, w);
      const Evaluation ev = evaluate(m, d);
      rows.push_back({to_string(w), artifact, level, intensity, ev.auroc, ev.balanced_accuracy});
    }
  };
  add(ds, "none", -1, 0.0);
  for (auto kind : artifacts) {
    const IntensityGrid grid = default_grid(kind);
    for (std::size_t l = 0; l < grid.levels.size(); ++l)
      add(corrupt_dataset(ds, grid.levels[l], seed, kind, static_cast<int>(l), 0), to_string(kind),
          static_cast<int>(l), grid.labels[l]);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string level_str(int level) { return level < 0 ? "clean" : std::to_string(level); }

std::string opt(const std::optional<double>& v) { return v ? num(*v) : ""; }

}  // namespace

std::string sweep_csv(const SweepResult& r, bool with_batch_size) {
  std::ostringstream o;
  o << "# schema=1\n";
  if (with_batch_size) o << "batch_size,";
  o << "scheme,artifact,level,intensity,seed,auroc,balanced_accuracy,d_mean,d_var\n";
  for (const auto& row : r.rows) {
    if (with_batch_size) o << row.batch_size << ',';
    o << row.scheme << ',' << row.artifact << ',' << level_str(row.level) << ','
      << (row.level < 0 ? "" : num(row.intensity)) << ',' << row.seed << ',' << num(row.auroc) << ','
      << num(row.balanced_accuracy) << ',' << opt(row.d_mean) << ',' << opt(row.d_var) << '\n';
  }
  return o.str();
}

std::string sweep_timing_csv(const SweepResult& r) {
  std::ostringstream o;
  o << "# schema=1\nbatch_size,scheme,artifact,level,seed,wall_time\n";
  for (const auto& row : r.rows)
    o << row.batch_size << ',' << row.scheme << ',' << row.artifact << ',' << level_str(row.level) << ','
      << row.seed << ',' << num(row.wall_time) << '\n';
  return o.str();
}

std::string drift_csv(const std::vector<DriftRow>& rows) {
  std::ostringstream o;
  o << "# schema=1\nlayer,kind,artifact,level,intensity,d_mean,d_var,d_mean_avg,d_var_avg\n";
  for (const auto& r : rows)
    o << r.layer << ',' << r.norm_kind << ',' << r.artifact << ',' << level_str(r.level) << ','
      << (r.level < 0 ? "" : num(r.intensity)) << ',' << num(r.drift.d_mean) << ',' << num(r.drift.d_var)
      << ',' << num(r.drift.d_mean_avg) << ',' << num(r.drift.d_var_avg) << '\n';
  return o.str();
}

std::string adapt_csv(const std::vector<AdaptRow>& rows) {
  std::ostringstream o;
  o << "# schema=1\nwhich,artifact,level,intensity,auroc,balanced_accuracy\n";
  for (const auto& r : rows)
    o << r.which << ',' << r.artifact << ',' << level_str(r.level) << ','
      << (r.level < 0 ? "" : num(r.intensity)) << ',' << num(r.auroc) << ',' << num(r.balanced_accuracy)
      << '\n';
  return o.str();
}

std::string history_csv(const std::vector<EpochRecord>& h) {
  std::ostringstream o;
  o << "# schema=1\nepoch,train_loss,val_auroc\n";
  for (const auto& e : h) o << e.epoch << ',' << num(e.train_loss) << ',' << num(e.val_auroc) << '\n';
  return o.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// directory corruption

nlohmann::json corrupt_directory(const fs::path& in_dir, const std::vector<ArtifactSpec>& specs,
                                 const fs::path& out_dir) {
  for (const auto& s : specs) validate(s);
  const fs::path csv = in_dir / "labels.csv";
  const LabeledDataset ds = load_dataset(in_dir, csv);
  fs::create_directories(out_dir);

  // File names in CSV order.
  std::vector<std::string> files;
  {
    std::ifstream f(csv);
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      files.push_back(line.substr(0, line.find(',')));
    }
  }

  nlohmann::json manifest;
  manifest["format"] = "mrshift-corruption";
  manifest["version"] = 1;
  manifest["source"] = fs::absolute(in_dir).lexically_normal().string();
  nlohmann::json jspecs = nlohmann::json::array();
  for (const auto& s : specs) jspecs.push_back(to_json(s));
  manifest["specs"] = jspecs;
  nlohmann::json jfiles = nlohmann::json::array();

  for (std::size_t i = 0; i < files.size(); ++i) {
    const fs::path dst = out_dir / files[i];
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    nlohmann::json seeds = nlohmann::json::array();
    if (specs.empty()) {
      fs::copy_file(in_dir / files[i], dst, fs::copy_options::overwrite_existing);
    } else {
      std::vector<ArtifactSpec> per_image = specs;
      for (auto& s : per_image) {
        s.seed = Rng(s.seed).child(i).seed();
        seeds.push_back(s.seed);
      }
      save_mrt1(compose(per_image, ds.images[i]), dst);
    }
    jfiles.push_back({{"file", files[i]}, {"seeds", seeds}});
  }
  manifest["files"] = jfiles;
  fs::copy_file(csv, out_dir / "labels.csv", fs::copy_options::overwrite_existing);
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace mrshift
