#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "mrshift/error.hpp"
#include "mrshift/phantom.hpp"
#include "mrshift/tensor_io.hpp"

using namespace mrshift;
using namespace testing;
namespace fs = std::filesystem;

namespace {

LabeledDataset labelled(std::size_t n, std::size_t positives, std::size_t side = 4) {
  LabeledDataset ds;
  for (std::size_t i = 0; i < n; ++i) {
    ds.images.push_back(Tensor::full({side, side}, static_cast<double>(i)));
    ds.labels.push_back({static_cast<std::uint8_t>(i < positives)});
  }
  return ds;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("phantom label counts follow lesion_prob") {
  PhantomConfig c;
  c.n_per_split = 1000;
  c.size = 32;
  c.seed = 3;
  const LabeledDataset ds = generate_phantoms(c);
  CHECK(ds.size() == 1000);
  CHECK(ds.positives() >= 440);
  CHECK(ds.positives() <= 560);
  CHECK(ds.height() == 32);
  CHECK(ds.width() == 32);
}

TEST_CASE("phantoms are deterministic, bounded and split-specific") {
  PhantomConfig c;
  c.n_per_split = 40;
  c.seed = 9;
  const LabeledDataset a = generate_phantoms(c);
  const LabeledDataset b = generate_phantoms(c);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.images[i].identical(b.images[i]));
    CHECK(a.labels[i] == b.labels[i]);
    for (double v : a.images[i].values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  const LabeledDataset t = generate_phantoms(c, Split::Test);
  CHECK_FALSE(a.images[0].identical(t.images[0]));
  c.seed = 10;
  CHECK_FALSE(generate_phantoms(c).images[0].identical(a.images[0]));
}

TEST_CASE("image maximum does not depend on the label") {
  PhantomConfig c;
  c.n_per_split = 60;
  c.seed = 4;
  const LabeledDataset ds = generate_phantoms(c);
  double lesion_max_sum = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto v = ds.images[i].values();
    const double mx = *std::max_element(v.begin(), v.end());
    if (ds.labels[i][0] == 0) {
      CHECK(mx == 1.0);
      CHECK(*std::min_element(v.begin(), v.end()) == 0.0);
    } else {
      lesion_max_sum += mx;
    }
  }
  // a dark lesion only rarely covers the brightest anatomy
  CHECK(lesion_max_sum / static_cast<double>(ds.positives()) > 0.99);
}

TEST_CASE("phantom config validation") {
  PhantomConfig c;
  c.size = 8;
  CHECK_THROWS_AS(validate(c), ParamError);
  c = PhantomConfig{};
  c.lesion_prob = 1.0;
  CHECK_THROWS_AS(validate(c), ParamError);
  c = PhantomConfig{};
  c.size = 16;
  c.lesion_radius_max = 6.0;
  CHECK_THROWS_AS(generate_phantoms(c), ParamError);
  c = PhantomConfig{};
  c.lesion_contrast_min = 0.6;
  c.lesion_contrast_max = 0.4;
  CHECK_THROWS_AS(validate(c), ParamError);
  c = PhantomConfig{};
  c.lesion_contrast_max = 1.5;
  CHECK_THROWS_AS(validate(c), ParamError);
  c = PhantomConfig{};
  c.ellipses_min = 0;
  CHECK_THROWS_AS(validate(c), ParamError);
}

TEST_CASE("phantom config JSON round trip") {
  PhantomConfig c;
  c.size = 48;
  c.seed = 77;
  c.lesion_contrast_min = 0.31;
  const PhantomConfig back = phantom_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_THROWS_AS(phantom_config_from_json(nlohmann::json{{"size", "big"}}), ParamError);
}

TEST_CASE("holdout split sizes and disjointness") {
  const LabeledDataset ds = labelled(100, 50);
  const HoldoutSplit s = split_holdout(ds, 0.15, 0.15, 1);
  CHECK(s.train.size() == 70);
  CHECK(s.val.size() == 15);
  CHECK(s.test.size() == 15);
  std::set<std::size_t> all;
  for (const auto* v : {&s.train_idx, &s.val_idx, &s.test_idx}) all.insert(v->begin(), v->end());
  CHECK(all.size() == 100);
  CHECK(s.val.split == Split::Val);
  // subset images follow the recorded indices
  for (std::size_t i = 0; i < s.test.size(); ++i)
    CHECK(s.test.images[i].values()[0] == static_cast<double>(s.test_idx[i]));
  const HoldoutSplit all_train = split_holdout(ds, 0.0, 0.0, 1);
  CHECK(all_train.train.size() == 100);
  CHECK(all_train.val.size() == 0);
  CHECK(all_train.test.size() == 0);
}

TEST_CASE("holdout split is stratified and seeded") {
  const LabeledDataset ds = labelled(200, 60);
  const HoldoutSplit s = split_holdout(ds, 0.15, 0.15, 5);
  auto near = [](std::size_t pos, std::size_t size) {
    const double expect = 0.3 * static_cast<double>(size);
    return std::abs(static_cast<double>(pos) - expect) <= 1.0;
  };
  CHECK(near(s.train.positives(), s.train.size()));
  CHECK(near(s.val.positives(), s.val.size()));
  CHECK(near(s.test.positives(), s.test.size()));
  const HoldoutSplit again = split_holdout(ds, 0.15, 0.15, 5);
  CHECK(again.test_idx == s.test_idx);
  const HoldoutSplit other = split_holdout(ds, 0.15, 0.15, 6);
  CHECK(other.test_idx != s.test_idx);
}

TEST_CASE("holdout split errors") {
  CHECK_THROWS_AS(split_holdout(labelled(10, 5), 0.5, 0.5, 1), ParamError);
  CHECK_THROWS_AS(split_holdout(labelled(10, 5), -0.1, 0.2, 1), ParamError);
  // one positive cannot populate three splits
  CHECK_THROWS_AS(split_holdout(labelled(40, 1), 0.15, 0.15, 1), DataError);
}

TEST_CASE("dataset directory round trip") {
  TempDir dir("mrshift_test_dataset");
  PhantomConfig c;
  c.n_per_split = 12;
  c.size = 16;
  c.lesion_radius_max = 2.5;
  const LabeledDataset ds = generate_phantoms(c);
  save_dataset(ds, dir.path);
  const LabeledDataset back = load_dataset(dir.path, dir.path / "labels.csv");
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.images[i].identical(ds.images[i]));
    CHECK(back.labels[i] == ds.labels[i]);
  }
}

TEST_CASE("dataset loading from CSV") {
  TempDir dir("mrshift_test_csv");
  save_mrt1(Tensor::full({4, 4}, 0.5), dir.path / "a.mrt1");
  save_mrt1(Tensor::full({4, 4}, 0.25), dir.path / "b.mrt1");
  save_mrt1(Tensor::full({8, 8}, 0.25), dir.path / "big.mrt1");
  auto write = [&](const std::string& body) {
    std::ofstream(dir.path / "labels.csv") << body;
    return dir.path / "labels.csv";
  };

  const LabeledDataset two = load_dataset(dir.path, write("file,label_0\na.mrt1,1\nb.mrt1,0\n"));
  CHECK(two.size() == 2);
  CHECK(two.positives() == 1);
  CHECK(two.images[1](0, 0) == 0.25);

  const LabeledDataset multi = load_dataset(dir.path, write("file,label_0,label_1\na.mrt1,1,0\nb.mrt1,0,1\n"));
  CHECK(multi.num_pathologies == 2);
  CHECK(multi.positives(1) == 1);

  CHECK_THROWS_AS(load_dataset(dir.path, write("file,label_0\na.mrt1,1\nmissing.mrt1,0\n")), DataError);
  CHECK_THROWS_AS(load_dataset(dir.path, write("file,label_0\na.mrt1,1\nbig.mrt1,0\n")), DataError);
  CHECK_THROWS_AS(load_dataset(dir.path, write("file,label_0\na.mrt1,2\n")), DataError);
  CHECK_THROWS_AS(load_dataset(dir.path, write("file,label_0\na.mrt1\n")), DataError);
  CHECK_THROWS_AS(load_dataset(dir.path, write("name,y\na.mrt1,1\n")), DataError);
  CHECK_THROWS_AS(load_dataset(dir.path, dir.path / "nope.csv"), DataError);
}

TEST_CASE("dataset validation") {
  LabeledDataset ds = labelled(3, 1);
  CHECK_NOTHROW(validate(ds));
  ds.labels.pop_back();
  CHECK_THROWS_AS(validate(ds), DataError);
  ds = labelled(3, 1);
  ds.images[2] = Tensor({5, 4});
  CHECK_THROWS_AS(validate(ds), DataError);
  ds = labelled(3, 1);
  ds.labels[0] = {1, 0};
  CHECK_THROWS_AS(validate(ds), DataError);
}
