#include "mrshift/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mrshift/error.hpp"
#include "mrshift/rng.hpp"
#include "mrshift/tensor_io.hpp"

namespace mrshift {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

std::size_t LabeledDataset::positives(std::size_t k) const {
  std::size_t n = 0;
  for (const auto& l : labels) n += l.at(k);
  return n;
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledDataset out;
  out.num_pathologies = num_pathologies;
  out.split = split;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void validate(const LabeledDataset& ds) {
  if (ds.images.size() != ds.labels.size())
    throw DataError("dataset: image and label counts differ");
  if (ds.num_pathologies < 1) throw DataError("dataset: K must be >= 1");
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& img = ds.images[i];
    if (img.rank() != 2 || img.is_complex())
      throw DataError("dataset: example " + std::to_string(i) + " is not a real 2-D image");
    if (img.dims() != ds.images.front().dims())
      throw DataError("dataset: shape mismatch at example " + std::to_string(i) + " (" +
                      shape_str(img.dims()) + " vs " + shape_str(ds.images.front().dims()) + ")");
    if (ds.labels[i].size() != ds.num_pathologies)
      throw DataError("dataset: label width mismatch at example " + std::to_string(i));
    for (auto l : ds.labels[i])
      if (l > 1) throw DataError("dataset: labels must be 0 or 1");
  }
}

// ---------------------------------------------------------------------------
// phantom generation

nlohmann::json to_json(const PhantomConfig& c) {
  return {{"size", c.size},
          {"n_per_split", c.n_per_split},
          {"lesion_prob", c.lesion_prob},
          {"lesion_radius_min", c.lesion_radius_min},
          {"lesion_radius_max", c.lesion_radius_max},
          {"lesion_contrast_min", c.lesion_contrast_min},
          {"lesion_contrast_max", c.lesion_contrast_max},
          {"ellipses_min", c.ellipses_min},
          {"ellipses_max", c.ellipses_max},
          {"ellipse_intensity_min", c.ellipse_intensity_min},
          {"ellipse_intensity_max", c.ellipse_intensity_max},
          {"seed", c.seed}};
}

PhantomConfig phantom_config_from_json(const nlohmann::json& j) {
  PhantomConfig c;
  try {
    c.size = j.value("size", c.size);
    c.n_per_split = j.value("n_per_split", c.n_per_split);
    c.lesion_prob = j.value("lesion_prob", c.lesion_prob);
    c.lesion_radius_min = j.value("lesion_radius_min", c.lesion_radius_min);
    c.lesion_radius_max = j.value("lesion_radius_max", c.lesion_radius_max);
    c.lesion_contrast_min = j.value("lesion_contrast_min", c.lesion_contrast_min);
    c.lesion_contrast_max = j.value("lesion_contrast_max", c.lesion_contrast_max);
    c.ellipses_min = j.value("ellipses_min", c.ellipses_min);
    c.ellipses_max = j.value("ellipses_max", c.ellipses_max);
    c.ellipse_intensity_min = j.value("ellipse_intensity_min", c.ellipse_intensity_min);
    c.ellipse_intensity_max = j.value("ellipse_intensity_max", c.ellipse_intensity_max);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ParamError(std::string("phantom config: ") + e.what());
  }
  validate(c);
  return c;
}

void validate(const PhantomConfig& c) {
  if (c.size < 16) throw ParamError("phantom: size must be >= 16");
  if (!(c.lesion_prob > 0 && c.lesion_prob < 1)) throw ParamError("phantom: lesion_prob must be in (0, 1)");
  if (!(c.lesion_radius_min > 0) || c.lesion_radius_min > c.lesion_radius_max)
    throw ParamError("phantom: degenerate lesion radius range");
  // The disc plus a one-pixel margin has to fit inside the central region.
  if (2.0 * (c.lesion_radius_max + 1.0) >= 0.5 * static_cast<double>(c.size))
    throw ParamError("phantom: lesion disc does not fit inside the image");
  if (!(c.lesion_contrast_min > 0) || c.lesion_contrast_min > c.lesion_contrast_max || !(c.lesion_contrast_max <= 1))
    throw ParamError("phantom: degenerate lesion contrast range");
  if (c.ellipses_min < 1 || c.ellipses_min > c.ellipses_max)
    throw ParamError("phantom: degenerate ellipse count range");
  if (!(c.ellipse_intensity_min > 0) || c.ellipse_intensity_min > c.ellipse_intensity_max)
    throw ParamError("phantom: degenerate ellipse intensity range");
}

namespace {

double smoothstep_edge(double rho, double softness) {
  // 1 inside (rho < 1), 0 outside, logistic transition of width ~softness.
  return 1.0 / (1.0 + std::exp((rho - 1.0) / softness));
}

Tensor make_phantom(const PhantomConfig& c, Rng& rng, bool lesion) {
  const std::size_t n = c.size;
  const double half = 0.5 * static_cast<double>(n);
  Tensor img({n, n});

  const auto count = rng.uniform_int(c.ellipses_min, c.ellipses_max);
  for (std::int64_t e = 0; e < count; ++e) {
    const double cr = half + rng.uniform(-0.15, 0.15) * n;
    const double cc = half + rng.uniform(-0.15, 0.15) * n;
    const double ar = rng.uniform(0.15, 0.4) * n;
    const double ac = rng.uniform(0.15, 0.4) * n;
    const double theta = rng.uniform(0.0, std::numbers::pi);
    const double level = rng.uniform(c.ellipse_intensity_min, c.ellipse_intensity_max);
    const double cs = std::cos(theta), sn = std::sin(theta);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t col = 0; col < n; ++col) {
        const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(col) - cc;
        const double u = (cs * dr + sn * dc) / ar;
        const double v = (-sn * dr + cs * dc) / ac;
        img(r, col) += level * smoothstep_edge(std::sqrt(u * u + v * v), 0.05);
      }
    }
  }

  auto v = img.values();
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double lo = *mn, range = *mx - *mn;
  for (auto& x : v) x = range > 0 ? (x - lo) / range : 0.0;

  if (lesion) {
    const double radius = rng.uniform(c.lesion_radius_min, c.lesion_radius_max);
    const double contrast = rng.uniform(c.lesion_contrast_min, c.lesion_contrast_max);
    // Dark lesions leave the image maximum, and so any max-relative noise level,
    // independent of the label. They sit in the central half of the field of view, inside the anatomy.
    const double lo = 0.25 * n + radius + 1.0, hi = 0.75 * n - radius - 1.0;
    const double cr = rng.uniform(lo, hi), cc = rng.uniform(lo, hi);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t col = 0; col < n; ++col) {
        const double dr = static_cast<double>(r) - cr, dc = static_cast<double>(col) - cc;
        const double d = contrast * smoothstep_edge(std::sqrt(dr * dr + dc * dc) / radius, 0.1);
        img(r, col) = std::max(0.0, img(r, col) - d);
      }
    }
  }

  return img;
}

}  // namespace

LabeledDataset generate_phantoms(const PhantomConfig& cfg, Split split) {
  validate(cfg);
  Rng rng = Rng(cfg.seed).child(static_cast<std::uint64_t>(split));
  LabeledDataset ds;
  ds.split = split;
  ds.num_pathologies = 1;
  ds.images.reserve(cfg.n_per_split);
  for (std::size_t i = 0; i < cfg.n_per_split; ++i) {
    Rng item = rng.child(i);
    const bool lesion = item.uniform() < cfg.lesion_prob;
    ds.images.push_back(make_phantom(cfg, item, lesion));
    ds.labels.push_back({static_cast<std::uint8_t>(lesion)});
  }
  return ds;
}

// ---------------------------------------------------------------------------
// file I/O

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir) {
  validate(ds);
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "labels.csv");
  if (!csv) throw DataError("dataset: cannot write " + (dir / "labels.csv").string());
  csv << "file";
  for (std::size_t k = 0; k < ds.num_pathologies; ++k) csv << ",label_" << k;
  csv << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::ostringstream name;
    name << "img_" << std::setw(5) << std::setfill('0') << i << ".mrt1";
    save_mrt1(ds.images[i], dir / name.str());
    csv << name.str();
    for (auto l : ds.labels[i]) csv << ',' << static_cast<int>(l);
    csv << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

LabeledDataset load_dataset(const std::filesystem::path& tensor_dir,
                            const std::filesystem::path& labels_csv) {
  std::ifstream f(labels_csv);
  if (!f) throw DataError("dataset: missing labels file " + labels_csv.string());
  std::string line;
  if (!std::getline(f, line)) throw DataError("dataset: empty labels file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "file")
    throw DataError("dataset: header must be file,label_0,...");
  for (std::size_t k = 1; k < header.size(); ++k)
    if (header[k] != "label_" + std::to_string(k - 1))
      throw DataError("dataset: unexpected header column '" + header[k] + "'");

  LabeledDataset ds;
  ds.num_pathologies = header.size() - 1;
  std::size_t row = 1;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("dataset: row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields");
    const auto path = tensor_dir / fields[0];
    if (!std::filesystem::exists(path)) throw DataError("dataset: missing file " + path.string());
    Tensor img = load_mrt1(path);
    if (img.rank() != 2 || img.is_complex())
      throw DataError("dataset: " + path.string() + " is not a real 2-D tensor");
    if (!ds.images.empty() && img.dims() != ds.images.front().dims())
      throw DataError("dataset: shape mismatch, " + path.string() + " is " + shape_str(img.dims()) +
                      " but earlier files are " + shape_str(ds.images.front().dims()));
    std::vector<std::uint8_t> labels;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      if (fields[k] != "0" && fields[k] != "1")
        throw DataError("dataset: row " + std::to_string(row) + " label '" + fields[k] +
                        "' is not 0 or 1");
      labels.push_back(fields[k] == "1");
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(std::move(labels));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// stratified split

HoldoutSplit split_holdout(const LabeledDataset& ds, double val_frac, double test_frac,
                           std::uint64_t seed) {
  if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1)
    throw ParamError("split_holdout: fractions must be >= 0 with sum < 1");
  validate(ds);

  std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < ds.size(); ++i) strata[ds.labels[i]].push_back(i);

  // Split totals are rounded once, then shared across strata by largest remainder.
  const auto n = static_cast<double>(ds.size());
  auto allocate = [&](double frac) {
    const auto total = static_cast<std::size_t>(std::llround(frac * n));
    std::vector<std::size_t> quota;
    std::vector<std::pair<double, std::size_t>> rema;
    std::size_t assigned = 0, s = 0;
    for (const auto& [key, idx] : strata) {
      const double exact = frac * static_cast<double>(idx.size());
      quota.push_back(static_cast<std::size_t>(std::floor(exact)));
      assigned += quota.back();
      rema.emplace_back(exact - std::floor(exact), s++);
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total && i < rema.size(); ++i, ++assigned)
      ++quota[rema[i].second];
    return quota;
  };
  const auto val_q = allocate(val_frac);
  const auto test_q = allocate(test_frac);

  HoldoutSplit out;
  Rng rng(seed);
  std::size_t s = 0;
  for (const auto& [key, members] : strata) {
    if ((val_frac > 0 && val_q[s] == 0) || (test_frac > 0 && test_q[s] == 0))
      throw DataError("split_holdout: a split would hold no example of some class");
    if (val_q[s] + test_q[s] >= members.size() && val_frac + test_frac > 0)
      throw DataError("split_holdout: class too small to populate every split");
    std::vector<std::size_t> idx = members;
    for (std::size_t i = idx.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(idx[i - 1], idx[j]);
    }
    out.val_idx.insert(out.val_idx.end(), idx.begin(), idx.begin() + val_q[s]);
    out.test_idx.insert(out.test_idx.end(), idx.begin() + val_q[s],
                        idx.begin() + val_q[s] + test_q[s]);
    out.train_idx.insert(out.train_idx.end(), idx.begin() + val_q[s] + test_q[s], idx.end());
    ++s;
  }
  std::sort(out.train_idx.begin(), out.train_idx.end());
  std::sort(out.val_idx.begin(), out.val_idx.end());
  std::sort(out.test_idx.begin(), out.test_idx.end());
  out.train = ds.subset(out.train_idx);
  out.val = ds.subset(out.val_idx);
  out.test = ds.subset(out.test_idx);
  out.train.split = Split::Train;
  out.val.split = Split::Val;
  out.test.split = Split::Test;
  return out;
}

}  // namespace mrshift
