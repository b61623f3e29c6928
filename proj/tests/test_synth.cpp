#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ynet/error.hpp"
#include "ynet/synth/synth.hpp"

using namespace ynet;
using namespace ynet::synth;
namespace fs = std::filesystem;

namespace {

SynthConfig small_cfg() {
  SynthConfig c;
  c.roi_size = 384;
  c.regions = 12;
  return c;
}

}  // namespace

TEST_CASE("diagnosis rule") {
  const std::array<double, 3> t{0.05, 0.15, 0.35};
  CHECK(diagnosis_rule(0.0, t) == 0);
  CHECK(diagnosis_rule(0.0499, t) == 0);
  CHECK(diagnosis_rule(0.05, t) == 1);
  CHECK(diagnosis_rule(0.15, t) == 2);
  CHECK(diagnosis_rule(0.35, t) == 3);
  CHECK(diagnosis_rule(0.5, t) == 3);
}

TEST_CASE("generated ROI contracts") {
  SynthConfig c = small_cfg();
  SUBCASE("forced fractions") {
    c.forced_malignant_fraction = 0.0;
    auto a = generate_roi(c, 1);
    CHECK(malignant_fraction(a.mask) == 0.0);
    CHECK(a.label == 0);
    c.forced_malignant_fraction = 0.5;
    auto b = generate_roi(c, 2);
    CHECK(malignant_fraction(b.mask) == doctest::Approx(0.5).epsilon(1e-5));
    CHECK(b.label == 3);
  }
  SUBCASE("same seed is bit-identical") {
    auto a = generate_roi(c, 42), b = generate_roi(c, 42);
    CHECK(a.image.pixels == b.image.pixels);
    CHECK(a.mask == b.mask);
    CHECK(a.label == b.label);
    auto d = generate_roi(c, 43);
    CHECK(d.image.pixels != a.image.pixels);
  }
  SUBCASE("targets land inside their band and the rule holds") {
    for (int t = 0; t < 12; ++t) {
      auto r = generate_roi(c, 100 + t, t % 4);
      CHECK(r.label == t % 4);
      CHECK(r.label == diagnosis_rule(malignant_fraction(r.mask), c.thresholds));
      CHECK(r.mask.width == 384);
      for (auto v : r.mask.labels) REQUIRE(v < 8);
    }
  }
  SUBCASE("malignant tissue is localized") {
    // A DCIS-level ROI still leaves some 128x128 window free of class 2.
    auto r = generate_roi(c, 7, 2);
    bool clean_window = false;
    for (std::size_t wy = 0; wy + 128 <= 384; wy += 128)
      for (std::size_t wx = 0; wx + 128 <= 384; wx += 128) {
        bool any = false;
        for (std::size_t y = wy; y < wy + 128 && !any; ++y)
          for (std::size_t x = wx; x < wx + 128; ++x) any = any || r.mask.at(x, y) == malignant_epithelium;
        clean_window = clean_window || !any;
      }
    CHECK(clean_window);
  }
  SUBCASE("validation") {
    c.roi_size = 200;
    CHECK_THROWS_AS(generate_roi(c, 1), ConfigError);
    c = small_cfg();
    c.regions = 4;
    CHECK_THROWS_AS(generate_roi(c, 1), ConfigError);
  }
}

TEST_CASE("dataset layout and round trip") {
  const fs::path dir = fs::temp_directory_path() / "ynet_synth_test";
  fs::remove_all(dir);
  const auto recs = generate_dataset(small_cfg(), dir, 8, 8, 5);
  CHECK(recs.size() == 16);
  const auto manifest = read_manifest(dir);
  REQUIRE(manifest.size() == 16);
  std::set<int> train_labels, test_labels;
  std::size_t dirs = 0;
  for (const auto& r : manifest) {
    (r.split == "train" ? train_labels : test_labels).insert(r.label);
    const auto roi = load_roi(dir, r);
    CHECK(diagnosis_rule(malignant_fraction(roi.mask), small_cfg().thresholds) == r.label);
    CHECK(roi.image.pixels == generate_roi(small_cfg(), r.seed, r.label).image.pixels);
    dirs += fs::is_directory(roi_dir(dir, r));
  }
  CHECK(dirs == 16);
  CHECK(train_labels.size() == 4);
  CHECK(test_labels.size() == 4);
  SUBCASE("corrupted label file") {
    {
      std::ofstream f(roi_dir(dir, manifest[0]) / "label.txt");
      f << (manifest[0].label + 1) % 4;
    }
    CHECK_THROWS_AS(load_roi(dir, manifest[0]), DataError);
  }
  fs::remove_all(dir);
  CHECK_THROWS_AS(read_manifest(dir), DataError);
}
