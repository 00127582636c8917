#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <map>

#include "spurnet/dataset.hpp"
#include "spurnet/error.hpp"

using namespace spurnet;

TEST_CASE("two moons: rho=1 makes x1 a perfect predictor and minority groups empty") {
  SpuriousMoonsConfig cfg;
  cfg.n = 400;
  cfg.rho = 1.0;
  cfg.seed = 3;
  auto ds = gen_two_moons(cfg);
  const auto* aligned = ds.attribute("x1_aligned");
  REQUIRE(aligned);
  for (int a : *aligned) CHECK(a == 1);

  double max0 = -1e9, min1 = 1e9;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] == 0)
      max0 = std::max(max0, ds.inputs(i, 0));
    else
      min1 = std::min(min1, ds.inputs(i, 0));
  }
  CHECK(max0 < min1);  // a single threshold separates the classes
}

TEST_CASE("two moons: rho=0 never applies the displacement") {
  SpuriousMoonsConfig cfg;
  cfg.n = 200;
  cfg.rho = 0.0;
  cfg.seed = 4;
  auto ds = gen_two_moons(cfg);
  const auto* aligned = ds.attribute("x1_aligned");
  for (int a : *aligned) CHECK(a == 0);
}

TEST_CASE("two moons: minority fraction within binomial 3 sigma of 1-rho") {
  SpuriousMoonsConfig cfg;
  cfg.n = 2000;
  cfg.rho = 0.95;
  cfg.seed = 5;
  auto ds = gen_two_moons(cfg);
  const auto* aligned = ds.attribute("x1_aligned");
  std::size_t minority = 0;
  for (int a : *aligned) minority += a == 0;
  double frac = static_cast<double>(minority) / cfg.n;
  double sigma = std::sqrt(0.05 * 0.95 / cfg.n);
  CHECK(std::fabs(frac - 0.05) <= 3 * sigma);
}

TEST_CASE("two moons: group counts conserve n") {
  SpuriousMoonsConfig cfg;
  cfg.n = 500;
  cfg.seed = 6;
  auto ds = gen_two_moons(cfg);
  const auto* aligned = ds.attribute("x1_aligned");
  std::map<std::pair<int, int>, std::size_t> counts;
  for (std::size_t i = 0; i < ds.size(); ++i) ++counts[{ds.labels[i], (*aligned)[i]}];
  std::size_t total = 0;
  for (auto& [g, c] : counts) total += c;
  CHECK(total == cfg.n);
}

namespace {
SyntheticImageConfig default_image_cfg() {
  SyntheticImageConfig cfg;
  cfg.per_class = 500;
  cfg.attributes = {{"patch", 0.95, MarkerKind::kCornerPatch},
                    {"band", 0.95, MarkerKind::kBottomBand}};
  return cfg;
}
}  // namespace

TEST_CASE("images: rho=0.5 gives class-independent attributes (chi-square)") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto cfg = default_image_cfg();
    cfg.attributes[0].rho = 0.5;
    cfg.attributes[1].rho = 0.5;
    cfg.seed = seed;
    auto ds = gen_synthetic_images(cfg);
    for (const auto& [name, vals] : ds.attributes) {
      double n00 = 0, n01 = 0, n10 = 0, n11 = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.labels[i] == 0)
          (vals[i] == 0 ? n00 : n01) += 1;
        else
          (vals[i] == 0 ? n10 : n11) += 1;
      }
      double n = n00 + n01 + n10 + n11;
      double r0 = n00 + n01, r1 = n10 + n11, c0 = n00 + n10, c1 = n01 + n11;
      double chi2 = 0;
      for (auto [obs, er, ec] : {std::tuple{n00, r0, c0}, {n01, r0, c1}, {n10, r1, c0},
                                 {n11, r1, c1}}) {
        double e = er * ec / n;
        chi2 += (obs - e) * (obs - e) / e;
      }
      CHECK(chi2 < 6.635);  // chi-square df=1 critical value at p=0.01
    }
  }
}

TEST_CASE("images: rho=1 makes every marker equal the class label") {
  auto cfg = default_image_cfg();
  cfg.per_class = 50;
  cfg.attributes[0].rho = 1.0;
  cfg.attributes[1].rho = 1.0;
  auto ds = gen_synthetic_images(cfg);
  for (const auto& [name, vals] : ds.attributes)
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(vals[i] == ds.labels[i]);
}

TEST_CASE("images: misaligned group count within binomial 3 sigma") {
  auto cfg = default_image_cfg();
  cfg.seed = 21;
  auto ds = gen_synthetic_images(cfg);
  const auto* patch = ds.attribute("patch");
  std::size_t count = 0;  // group (y=1, marker misaligned i.e. a=0)
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == 1 && (*patch)[i] == 0) ++count;
  double sigma = std::sqrt(500 * 0.05 * 0.95);
  CHECK(std::fabs(static_cast<double>(count) - 25.0) <= 3 * sigma);
}

TEST_CASE("images: pixel values stay in [0,1]") {
  auto cfg = default_image_cfg();
  cfg.per_class = 20;
  auto ds = gen_synthetic_images(cfg);
  for (double v : ds.inputs.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("images: overlapping attribute regions rejected") {
  auto cfg = default_image_cfg();
  cfg.attributes[1].kind = MarkerKind::kCornerPatch;  // same region as attribute 0
  CHECK_THROWS_AS(gen_synthetic_images(cfg), ConfigError);
}

TEST_CASE("split: fractions produce exact sizes and leftover goes to train") {
  SpuriousMoonsConfig cfg;
  cfg.n = 1000;
  auto ds = gen_two_moons(cfg);
  auto parts = split(ds, {0.8, 0.1, 0.1}, 9);
  CHECK(parts.train.size() == 800);
  CHECK(parts.val.size() == 100);
  CHECK(parts.test.size() == 100);
  CHECK(parts.test.split == "test");
}

TEST_CASE("split: deterministic for a fixed seed") {
  SpuriousMoonsConfig cfg;
  cfg.n = 300;
  auto ds = gen_two_moons(cfg);
  auto a = split(ds, {0.7, 0.0, 0.3}, 42);
  auto b = split(ds, {0.7, 0.0, 0.3}, 42);
  CHECK(a.train.inputs.data == b.train.inputs.data);
  CHECK(a.test.labels == b.test.labels);
}

TEST_CASE("split: balanced test subsampling equalizes group counts") {
  // hand-built dataset: groups (0,0)=200, (0,1)=30, (1,0)=100, (1,1)=70
  LabeledDataset ds;
  std::size_t n = 400;
  ds.inputs = Matrix(n, 1);
  std::vector<int> attr(n);
  for (std::size_t i = 0; i < n; ++i) {
    int y, a;
    if (i < 200) y = 0, a = 0;
    else if (i < 230) y = 0, a = 1;
    else if (i < 330) y = 1, a = 0;
    else y = 1, a = 1;
    ds.labels.push_back(y);
    attr[i] = a;
    ds.inputs(i, 0) = static_cast<double>(i);
  }
  ds.attributes.emplace_back("a", attr);
  ds.num_classes = 2;

  auto parts = split(ds, {0.0, 0.0, 1.0}, 1, "a");
  CHECK(parts.test.size() == 120);  // 4 groups x min group 30
  std::map<std::pair<int, int>, std::size_t> counts;
  const auto* pa = parts.test.attribute("a");
  for (std::size_t i = 0; i < parts.test.size(); ++i)
    ++counts[{parts.test.labels[i], (*pa)[i]}];
  for (auto& [g, c] : counts) CHECK(c == 30);
}

TEST_CASE("split: empty balanced group raises an error naming the group") {
  LabeledDataset ds;
  ds.inputs = Matrix(4, 1);
  ds.labels = {0, 0, 1, 1};
  ds.attributes.emplace_back("a", std::vector<int>{0, 0, 0, 1});
  ds.num_classes = 2;
  // group (0, 1) exists nowhere; group (1,1) has one member that may miss the test split
  try {
    split(ds, {0.75, 0.0, 0.25}, 3, "a");
    // if the lone (1,1) member landed in test, the missing (0,1) group still errors
    FAIL("expected an error");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find("y=") != std::string::npos);
  }
}

TEST_CASE("csv: random dataset round-trips field by field") {
  auto cfg = default_image_cfg();
  cfg.per_class = 25;
  cfg.grid = 6;
  cfg.attributes = {{"patch", 0.9, MarkerKind::kCornerPatch}};
  auto ds = gen_synthetic_images(cfg);
  ds.cluster_ids.assign(ds.size(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i) ds.cluster_ids[i] = static_cast<int>(i % 5);

  std::string path = "/tmp/spurnet_test_roundtrip.csv";
  save_dataset(ds, path);
  auto back = load_dataset(path);
  CHECK(back.inputs.data == ds.inputs.data);
  CHECK(back.labels == ds.labels);
  CHECK(back.attributes == ds.attributes);
  CHECK(back.cluster_ids == ds.cluster_ids);
  std::remove(path.c_str());
}

TEST_CASE("csv: empty dataset saves a header and loads to n=0") {
  LabeledDataset ds;
  ds.inputs = Matrix(0, 3);
  ds.attributes.emplace_back("a", std::vector<int>{});
  std::string path = "/tmp/spurnet_test_empty.csv";
  save_dataset(ds, path);
  auto back = load_dataset(path);
  CHECK(back.size() == 0);
  CHECK(back.inputs.cols == 3);
  REQUIRE(back.attributes.size() == 1);
  CHECK(back.attributes[0].first == "a");
  std::remove(path.c_str());
}

TEST_CASE("csv: malformed rows and headers are reported with line numbers") {
  std::string path = "/tmp/spurnet_test_bad.csv";
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("x_0,x_1,y,attr\n1.0,2.0,0,1\n3.0,4.0,1\n", f);  // line 3 missing a column
    std::fclose(f);
  }
  try {
    load_dataset(path);
    FAIL("expected an error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("a,b,c\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_dataset(path), IoError);
  std::remove(path.c_str());
}

TEST_CASE("interventions are exact involutions") {
  SUBCASE("moons displacement toggle") {
    SpuriousMoonsConfig cfg;
    cfg.n = 100;
    cfg.seed = 31;
    auto ds = gen_two_moons(cfg);
    auto iv = moons_intervention(cfg.spur_shift);
    const auto* attr = ds.attribute(iv.attribute);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::vector<double> row(ds.inputs.row(i).begin(), ds.inputs.row(i).end());
      auto orig = row;
      int a = (*attr)[i];
      int orig_a = a;
      iv.apply(row, ds.labels[i], a);
      CHECK(a == 1 - orig_a);
      iv.apply(row, ds.labels[i], a);
      CHECK(a == orig_a);
      CHECK(row == orig);
    }
  }
  SUBCASE("image marker swap") {
    auto cfg = default_image_cfg();
    cfg.per_class = 10;
    auto ds = gen_synthetic_images(cfg);
    auto iv = image_intervention(cfg, "band");
    const auto* attr = ds.attribute("band");
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::vector<double> row(ds.inputs.row(i).begin(), ds.inputs.row(i).end());
      auto orig = row;
      int a = (*attr)[i];
      iv.apply(row, ds.labels[i], a);
      CHECK(row != orig);
      iv.apply(row, ds.labels[i], a);
      CHECK(row == orig);
    }
  }
  SUBCASE("unregistered attribute rejected") {
    auto cfg = default_image_cfg();
    CHECK_THROWS_AS(image_intervention(cfg, "nonexistent"), ValueError);
  }
}
