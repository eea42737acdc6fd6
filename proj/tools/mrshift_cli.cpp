// mrshift: data generation, corruption, training and robustness sweeps.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical divergence, 1 anything else.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mrshift/error.hpp"
#include "mrshift/experiment.hpp"
#include "mrshift/tensor_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mrshift;

namespace {

constexpr const char* kOutEnv = "MRSHIFT_OUT";

fs::path default_out_root() {
  const char* env = std::getenv(kOutEnv);
  return env && *env ? fs::path(env) : fs::path("out");
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw DataError("cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ParamError(p.string() + ": " + e.what());
  }
}

// `key=value`; the value is parsed as JSON and falls back to a plain string.
void apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ParamError("--set expects key=value, got '" + kv + "'");
  const std::string key = kv.substr(0, eq), raw = kv.substr(eq + 1);
  json v;
  try {
    v = json::parse(raw);
  } catch (const json::exception&) {
    v = raw;
  }
  cfg[key] = v;
}

struct ConfigFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::size_t> jobs, n_seeds;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("-c,--config", f.config, "experiment JSON file")->check(CLI::ExistingFile);
  app->add_option("--set", f.sets, "override a top-level config key (key=json)");
  app->add_option("-j,--jobs", f.jobs, "parallel jobs");
  app->add_option("--n-seeds", f.n_seeds, "independent runs per scheme");
  app->add_option("--seed", f.seed, "base seed");
  app->add_option("-o,--output-dir", f.output_dir, "output directory");
}

ExperimentConfig resolve_config(const ConfigFlags& f) {
  json cfg = f.config.empty() ? json::object() : read_json(f.config);
  for (const auto& s : f.sets) apply_override(cfg, s);
  if (f.jobs) cfg["jobs"] = *f.jobs;
  if (f.n_seeds) cfg["n_seeds"] = *f.n_seeds;
  if (f.seed) cfg["seed"] = *f.seed;
  if (!f.output_dir.empty()) cfg["output_dir"] = f.output_dir;
  if (!cfg.contains("output_dir")) cfg["output_dir"] = default_out_root().string();
  // Relative data paths resolve against the config file.
  if (!f.config.empty() && cfg.contains("data_dir") && cfg["data_dir"].is_string()) {
    const fs::path d = cfg["data_dir"].get<std::string>();
    if (d.is_relative()) cfg["data_dir"] = (fs::path(f.config).parent_path() / d).string();
  }
  return experiment_config_from_json(cfg);
}

std::vector<ArtifactKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<ArtifactKind> out;
  for (const auto& n : names) out.push_back(artifact_kind_from_string(n));
  return out;
}

std::vector<ArtifactSpec> read_specs(const fs::path& p) {
  const json j = read_json(p);
  const json& arr = j.is_object() && j.contains("specs") ? j.at("specs") : j;
  if (!arr.is_array()) throw ParamError(p.string() + ": expected a list of artifact specs");
  std::vector<ArtifactSpec> specs;
  for (const auto& s : arr) specs.push_back(artifact_spec_from_json(s));
  return specs;
}

void emit(const fs::path& path, const std::string& text) {
  write_text(path, text);
  std::cout << "wrote " << path.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mrshift: MR artifact simulation and normalization robustness benchmark"};
  app.require_subcommand(1);

  // phantom gen
  auto* phantom = app.add_subcommand("phantom", "synthetic phantom datasets");
  phantom->require_subcommand(1);
  auto* gen = phantom->add_subcommand("gen", "generate a labeled phantom dataset");
  std::string gen_config, gen_out;
  std::optional<std::size_t> gen_n, gen_size;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_split = "train";
  gen->add_option("-c,--config", gen_config, "phantom config JSON")->check(CLI::ExistingFile);
  gen->add_option("-n,--count", gen_n, "number of images");
  gen->add_option("--size", gen_size, "image side length");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--split", gen_split, "rng stream: train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  gen->add_option("-o,--out", gen_out, "output directory");

  // corrupt
  auto* corrupt = app.add_subcommand("corrupt", "apply artifacts to every image of a dataset");
  std::string cor_in, cor_specs, cor_out;
  corrupt->add_option("-i,--in", cor_in, "input dataset directory")->required()->check(CLI::ExistingDirectory);
  corrupt->add_option("-s,--specs", cor_specs, "artifact spec list JSON (or a previous manifest.json)")
      ->required()
      ->check(CLI::ExistingFile);
  corrupt->add_option("-o,--out", cor_out, "output directory")->required();

  // train
  auto* trn = app.add_subcommand("train", "train one model on clean data");
  ConfigFlags trn_flags;
  add_config_flags(trn, trn_flags);
  std::string trn_scheme = "batch";
  std::uint64_t trn_run = 0;
  trn->add_option("--scheme", trn_scheme, "batch, group, layer, instance or none");
  trn->add_option("--run", trn_run, "run index (selects init and shuffle streams)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "artifact intensity sweep over schemes and seeds");
  ConfigFlags sw_flags;
  add_config_flags(sweep, sw_flags);
  bool sw_no_train = false;
  sweep->add_flag("--no-train", sw_no_train, "fail instead of training missing checkpoints");

  // drift
  auto* drift = app.add_subcommand("drift", "BN statistic drift under each artifact");
  std::string dr_ckpt, dr_data, dr_out;
  std::size_t dr_layer = 0;
  std::uint64_t dr_seed = 0;
  std::vector<std::string> dr_kinds = {"spike", "rician", "bias_field", "ghosting", "rigid_motion"};
  drift->add_option("--checkpoint", dr_ckpt, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  drift->add_option("--data", dr_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  drift->add_option("--layer", dr_layer, "norm layer index (0 = first)");
  drift->add_option("--artifacts", dr_kinds, "artifact kinds")->delimiter(',');
  drift->add_option("--seed", dr_seed, "corruption seed");
  drift->add_option("-o,--out", dr_out, "output CSV");

  // adapt
  auto* adapt = app.add_subcommand("adapt", "full and partial AdaBN adaptation");
  std::string ad_ckpt, ad_data, ad_out;
  std::vector<std::string> ad_which = {"both", "mean_only", "var_only"};
  std::vector<std::string> ad_kinds = {"spike", "rician"};
  std::uint64_t ad_seed = 0;
  std::size_t ad_bs = 32;
  double ad_m = 0.1;
  adapt->add_option("--checkpoint", ad_ckpt, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  adapt->add_option("--data", ad_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  adapt->add_option("--which", ad_which, "both, mean_only, var_only")->delimiter(',');
  adapt->add_option("--artifacts", ad_kinds, "artifact kinds")->delimiter(',');
  adapt->add_option("--seed", ad_seed, "corruption seed");
  adapt->add_option("--batch-size", ad_bs, "adaptation batch size");
  adapt->add_option("--momentum", ad_m, "adaptation EMA weight");
  adapt->add_option("-o,--out", ad_out, "output CSV");

  // batch-study
  auto* bstudy = app.add_subcommand("batch-study", "train BN models per batch size and sweep them");
  ConfigFlags bs_flags;
  add_config_flags(bstudy, bs_flags);
  std::vector<std::size_t> bs_sizes = {8, 16, 32, 64, 128};
  bstudy->add_option("--sizes", bs_sizes, "batch sizes")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      PhantomConfig pc = gen_config.empty() ? PhantomConfig{} : phantom_config_from_json(read_json(gen_config));
      if (gen_n) pc.n_per_split = *gen_n;
      if (gen_size) pc.size = *gen_size;
      if (gen_seed) pc.seed = *gen_seed;
      validate(pc);
      const Split split = gen_split == "val" ? Split::Val : gen_split == "test" ? Split::Test : Split::Train;
      const fs::path out = gen_out.empty() ? default_out_root() / "phantoms" : fs::path(gen_out);
      const LabeledDataset ds = generate_phantoms(pc, split);
      save_dataset(ds, out);
      json manifest = {{"format", "mrshift-phantoms"},
                       {"version", 1},
                       {"config", to_json(pc)},
                       {"split", to_string(split)},
                       {"count", ds.size()},
                       {"positives", ds.positives()}};
      emit(out / "manifest.json", manifest.dump(2) + "\n");
    } else if (corrupt->parsed()) {
      const json m = corrupt_directory(cor_in, read_specs(cor_specs), cor_out);
      std::cout << "corrupted " << m.at("files").size() << " images into " << cor_out << "\n";
    } else if (trn->parsed()) {
      const ExperimentConfig cfg = resolve_config(trn_flags);
      scheme_for(cfg, trn_scheme);
      const HoldoutSplit data = prepare_data(cfg);
      std::vector<EpochRecord> history;
      Model m = obtain_model(cfg, trn_scheme, trn_run, data, &history);
      const Evaluation ev = evaluate(m, data.test, cfg.train.label_index, 64, cfg.threshold);
      std::cout << "checkpoint " << checkpoint_path(cfg, trn_scheme, trn_run).string() << "\n"
                << "clean test auroc " << ev.auroc << " balanced accuracy " << ev.balanced_accuracy << "\n";
    } else if (sweep->parsed()) {
      ExperimentConfig cfg = resolve_config(sw_flags);
      if (sw_no_train) cfg.train_missing = false;
      const SweepResult r = run_sweep(cfg);
      emit(cfg.output_dir / "sweep.csv", sweep_csv(r));
      emit(cfg.output_dir / "sweep_timing.csv", sweep_timing_csv(r));
      write_text(cfg.output_dir / "sweep_config.json", to_json(cfg).dump(2) + "\n");
    } else if (drift->parsed()) {
      Model m = load_model(dr_ckpt);
      const LabeledDataset ds = load_dataset(dr_data, fs::path(dr_data) / "labels.csv");
      const auto rows = run_drift(m, ds, dr_layer, parse_kinds(dr_kinds), dr_seed);
      emit(dr_out.empty() ? default_out_root() / "drift.csv" : fs::path(dr_out), drift_csv(rows));
    } else if (adapt->parsed()) {
      const Model m = load_model(ad_ckpt);
      const LabeledDataset ds = load_dataset(ad_data, fs::path(ad_data) / "labels.csv");
      std::vector<AdaptWhich> which;
      for (const auto& w : ad_which) which.push_back(adapt_which_from_string(w));
      const auto rows = run_adapt_partial(m, ds, which, parse_kinds(ad_kinds), ad_seed, ad_bs, ad_m);
      emit(ad_out.empty() ? default_out_root() / "adapt.csv" : fs::path(ad_out), adapt_csv(rows));
    } else if (bstudy->parsed()) {
      const ExperimentConfig cfg = resolve_config(bs_flags);
      const SweepResult r = run_batch_size_study(cfg, bs_sizes);
      emit(cfg.output_dir / "batch_study.csv", sweep_csv(r, true));
      emit(cfg.output_dir / "batch_study_timing.csv", sweep_timing_csv(r));
    }
  } catch (const ParamError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
