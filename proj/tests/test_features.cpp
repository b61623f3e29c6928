#include <doctest.h>

#include <filesystem>

#include "ynet/diagnosis/features.hpp"
#include "ynet/diagnosis/mlp.hpp"
#include "ynet/error.hpp"
#include "ynet/rng.hpp"

using namespace ynet;
using namespace ynet::diagnosis;
using io::LabelMask;

namespace {

LabelMask from_rows(std::vector<std::vector<int>> rows) {
  LabelMask m(rows[0].size(), rows.size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[0].size(); ++x) m.at(x, y) = static_cast<std::uint8_t>(rows[y][x]);
  return m;
}

LabelMask random_mask(Rng& rng, std::size_t max_side, double invalid_rate) {
  LabelMask m(1 + rng.below(max_side), 1 + rng.below(max_side));
  for (auto& v : m.labels)
    v = rng.bernoulli(invalid_rate) ? LabelMask::kInvalid : static_cast<std::uint8_t>(rng.below(kTissueClasses));
  return m;
}

// Counting oracle over pixel pairs at Manhattan distance 1, each unordered
// pixel pair visited once (p < q in raster order), folded from an 8x8 table.
std::array<double, kPairBins> cooc_oracle(const LabelMask& m, std::size_t& pairs) {
  double table[kTissueClasses][kTissueClasses] = {};
  pairs = 0;
  const long W = long(m.width), H = long(m.height);
  for (long p = 0; p < W * H; ++p)
    for (long q = p + 1; q < W * H; ++q) {
      const long dx = std::abs(p % W - q % W), dy = std::abs(p / W - q / W);
      if (dx + dy != 1) continue;
      const auto a = m.labels[p], b = m.labels[q];
      if (a == LabelMask::kInvalid || b == LabelMask::kInvalid) continue;
      table[a][b] += 1;
      ++pairs;
    }
  std::array<double, kPairBins> out{};
  std::size_t idx = 0;
  for (std::size_t a = 0; a < kTissueClasses; ++a)
    for (std::size_t b = a; b < kTissueClasses; ++b, ++idx) {
      const double c = a == b ? table[a][a] : table[a][b] + table[b][a];
      out[idx] = pairs ? c / double(pairs) : 0.0;
    }
  return out;
}

std::array<double, kTissueClasses> freq_oracle(const LabelMask& m) {
  std::array<double, kTissueClasses> f{};
  double n = 0;
  for (std::size_t k = 0; k < kTissueClasses; ++k) {
    double c = 0;
    for (auto v : m.labels) c += v == k;
    f[k] = c;
    n += c;
  }
  for (auto& v : f) v /= n;
  return f;
}

}  // namespace

TEST_CASE("pair index layout") {
  std::size_t expect = 0;
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = a; b < 8; ++b) CHECK(pair_index(a, b) == expect++);
  CHECK(expect == 36);
  CHECK(pair_index(3, 1) == pair_index(1, 3));
  CHECK(kFeatureDim == 44);
}

TEST_CASE("frequency histogram") {
  auto f = frequency_hist(from_rows({{0, 0}, {1, 2}}));
  CHECK(f == std::array<double, 8>{0.5, 0.25, 0.25, 0, 0, 0, 0, 0});
  auto one = frequency_hist(LabelMask(5, 3, 6));
  CHECK(one == std::array<double, 8>{0, 0, 0, 0, 0, 0, 1, 0});
  CHECK_THROWS_AS(frequency_hist(LabelMask(2, 2, LabelMask::kInvalid)), InputError);
  CHECK_THROWS_AS(frequency_hist(LabelMask(2, 2, 9)), InputError);
}

TEST_CASE("co-occurrence histogram") {
  auto h = cooccurrence_hist(from_rows({{0, 0}, {1, 1}}));
  CHECK(h.pairs == 4);
  CHECK(h.bins[pair_index(0, 0)] == 0.25);
  CHECK(h.bins[pair_index(1, 1)] == 0.25);
  CHECK(h.bins[pair_index(0, 1)] == 0.5);
  auto c = cooccurrence_hist(LabelMask(4, 4, 5));
  CHECK(c.bins[pair_index(5, 5)] == 1.0);
  auto single = cooccurrence_hist(LabelMask(1, 1, 2));
  CHECK(single.pairs == 0);
  for (double v : single.bins) CHECK(v == 0.0);
  auto fv = extract_features(LabelMask(1, 1, 2));
  CHECK(fv.no_pairs);
  CHECK(fv.values[2] == 1.0);
  // Valid pixels separated by an invalid one form no pair.
  auto gap = cooccurrence_hist(from_rows({{1, 255, 2}}));
  CHECK(gap.pairs == 0);
}

TEST_CASE("histograms match counting oracles on random masks") {
  Rng rng(11);
  for (int t = 0; t < 1000; ++t) {
    auto m = random_mask(rng, 32, t % 3 == 0 ? 0.3 : 0.0);
    INFO("case " << t << " " << m.width << "x" << m.height);
    std::size_t pairs = 0;
    const auto oracle = cooc_oracle(m, pairs);
    const auto h = cooccurrence_hist(m);
    CHECK(h.pairs == pairs);
    CHECK(h.bins == oracle);
    bool any_valid = false;
    for (auto v : m.labels) any_valid = any_valid || v != LabelMask::kInvalid;
    if (!any_valid) continue;
    const auto f = frequency_hist(m);
    CHECK(f == freq_oracle(m));
    double s = 0;
    for (double v : f) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-6);
    if (pairs) {
      s = 0;
      for (double v : h.bins) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("feature invariances") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    auto m = random_mask(rng, 20, 0.1);
    LabelMask tr(m.height, m.width);
    for (std::size_t y = 0; y < m.height; ++y)
      for (std::size_t x = 0; x < m.width; ++x) tr.at(y, x) = m.at(x, y);
    CHECK(cooccurrence_hist(tr).bins == cooccurrence_hist(m).bins);
    // A horizontal mirror keeps the counts and the adjacency multiset.
    LabelMask mir = m;
    for (std::size_t y = 0; y < m.height; ++y)
      for (std::size_t x = 0; x < m.width; ++x) mir.at(x, y) = m.at(m.width - 1 - x, y);
    CHECK(cooccurrence_hist(mir).bins == cooccurrence_hist(m).bins);
  }
}

TEST_CASE("features CSV round trip") {
  const auto path = std::filesystem::temp_directory_path() / "ynet_features_test.csv";
  Rng rng(13);
  std::vector<FeatureRow> rows;
  for (int i = 0; i < 5; ++i) {
    FeatureRow r;
    r.roi_id = "roi" + std::to_string(i);
    for (auto& v : r.values) v = rng.uniform();
    r.label = i % 4;
    rows.push_back(r);
  }
  write_features_csv(path, rows);
  auto back = read_features_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].roi_id == rows[i].roi_id);
    CHECK(back[i].values == rows[i].values);
    CHECK(back[i].label == rows[i].label);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_features_csv(path), DataError);
}

TEST_CASE("diagnosis MLP") {
  Rng rng(14);
  Mlp mlp(rng);
  CHECK(mlp.param_count() == 44 * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64 + 64 * 32 + 32 + 32 * 4 + 4);
  CHECK(mlp.param_count() == 54884);

  std::array<double, kFeatureDim> f{};
  f[3] = 1.0;
  auto d = diagnose(mlp, f);
  double s = 0;
  for (double p : d.probabilities) s += p;
  CHECK(std::abs(s - 1.0) <= 1e-6);
  auto again = diagnose(mlp, f);
  CHECK(again.label == d.label);
  CHECK(again.probabilities == d.probabilities);

  SUBCASE("separable toy set reaches 100% within 200 epochs") {
    // Two classes told apart by which frequency bin dominates.
    std::vector<std::array<double, kFeatureDim>> x;
    std::vector<int> y;
    Rng r(15);
    for (int i = 0; i < 40; ++i) {
      std::array<double, kFeatureDim> v{};
      const int c = i % 2;
      const double major = r.uniform(0.6, 0.9);
      v[c] = major;
      v[1 - c] = 1 - major;
      x.push_back(v);
      y.push_back(c);
    }
    Rng mr(16);
    Mlp toy(mr);
    auto h = mlp_train(toy, x, y, {200, 1e-2, 0.0});
    bool reached = false;
    for (double a : h.accuracy) reached = reached || a == 1.0;
    CHECK(reached);
    // Small step: full-batch loss never goes up.
    Rng mr2(16);
    Mlp slow(mr2);
    auto hs = mlp_train(slow, x, y, {200, 1e-3, 0.0});
    for (std::size_t e = 1; e < hs.loss.size(); ++e) CHECK(hs.loss[e] <= hs.loss[e - 1]);
  }
  SUBCASE("zero epochs is near chance on balanced data") {
    double total = 0;
    Rng r(17);
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
      Mlp m(r);
      int hit = 0;
      for (int i = 0; i < 40; ++i) {
        std::array<double, kFeatureDim> v{};
        for (auto& e : v) e = r.uniform();
        hit += diagnose(m, v).label == i % 4;
      }
      total += hit / 40.0;
    }
    CHECK(total / trials == doctest::Approx(0.25).epsilon(0.4));
  }
  SUBCASE("bad input") {
    std::vector<std::array<double, kFeatureDim>> x(2);
    CHECK_THROWS_AS(mlp_train(mlp, x, std::vector<int>{0, 4}, {}), InputError);
    CHECK_THROWS_AS(mlp_train(mlp, x, std::vector<int>{0}, {}), InputError);
  }
}
