#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "ynet/train/metrics.hpp"
#include "ynet/train/train.hpp"

using namespace ynet;
using namespace ynet::train;

namespace {

std::vector<Sample> tiny_set(std::size_t n, std::size_t S, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Sample> v;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.size = S;
    s.label = static_cast<int>(i % 4);
    s.rgb.resize(3 * S * S);
    s.mask.resize(S * S);
    // Left/right halves with class-specific colours.
    const std::uint8_t a = static_cast<std::uint8_t>(rng.below(8)), b = static_cast<std::uint8_t>(rng.below(8));
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const std::uint8_t c = x < S / 2 ? a : b;
        s.mask[y * S + x] = c;
        for (std::size_t ch = 0; ch < 3; ++ch)
          s.rgb[(ch * S + y) * S + x] = static_cast<std::uint8_t>((c * 31 + ch * 70 + rng.below(10)) % 256);
      }
    v.push_back(std::move(s));
  }
  return v;
}

model::NetworkConfig tiny_net() {
  model::NetworkConfig c;
  c.w = 8;
  c.d = 1;
  return c;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  TrainConfig c;
  CHECK(lr_at(0, c) == 1e-4);
  CHECK(lr_at(29, c) == 1e-4);
  CHECK(lr_at(30, c) == 5e-5);
  CHECK(lr_at(60, c) == 2.5e-5);
  CHECK(lr_at(90, c) == 1.25e-5);
  for (std::size_t e = 1; e < 200; ++e) {
    CHECK(lr_at(e, c) <= lr_at(e - 1, c));
    if (e % 30 == 0) CHECK(lr_at(e, c) == lr_at(e - 1, c) / 2);
  }
  c.val_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("augmentation") {
  const std::size_t S = 20;
  Rng rng(1);
  std::vector<float> img(3 * S * S);
  std::vector<std::uint8_t> mask(S * S);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  for (auto& v : mask) v = static_cast<std::uint8_t>(rng.below(8));

  SUBCASE("no-op draw is the identity") {
    auto i2 = img;
    auto m2 = mask;
    apply_augment(i2, m2, S, {false, false, S, 0, 0});
    CHECK(i2 == img);
    CHECK(m2 == mask);
  }
  SUBCASE("double flips are the identity") {
    auto i2 = img;
    auto m2 = mask;
    apply_augment(i2, m2, S, {true, true, S, 0, 0});
    CHECK(i2 != img);
    CHECK(m2[0] == mask[S * S - 1]);
    apply_augment(i2, m2, S, {true, true, S, 0, 0});
    CHECK(i2 == img);
    CHECK(m2 == mask);
  }
  SUBCASE("random draws keep labels and value range") {
    for (int t = 0; t < 50; ++t) {
      auto i2 = img;
      auto m2 = mask;
      const auto d = draw_augment(S, rng);
      CHECK(d.crop >= 16);
      CHECK(d.crop <= S);
      apply_augment(i2, m2, S, d);
      std::set<std::uint8_t> before(mask.begin(), mask.end());
      for (auto v : m2) CHECK(before.count(v) == 1);
      const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
      for (float v : i2) CHECK((v >= *lo && v <= *hi));
    }
  }
  SUBCASE("crop maps image and mask alike") {
    // Mask equal to a quantized image channel stays consistent after a crop.
    std::vector<float> im(3 * S * S);
    std::vector<std::uint8_t> m(S * S);
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        m[y * S + x] = static_cast<std::uint8_t>(x < 10 ? 1 : 5);
        for (std::size_t c = 0; c < 3; ++c) im[(c * S + y) * S + x] = x < 10 ? 0.f : 1.f;
      }
    apply_augment(im, m, S, {false, false, 16, 2, 3});
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) {
        const float v = im[y * S + x];
        if (v == 0.f) CHECK(m[y * S + x] == 1);
        if (v == 1.f) CHECK(m[y * S + x] == 5);
      }
  }
}

TEST_CASE("mIOU and accuracy") {
  const std::vector<std::uint8_t> a{0, 1, 2, 3};
  CHECK(miou(a, a, 8) == 1.0);
  const std::vector<std::uint8_t> p0(4, 0), g1(4, 1);
  CHECK(miou(p0, g1, 2) == 0.0);
  const std::vector<std::uint8_t> pred{0, 0, 1, 1}, gt{0, 1, 1, 1};
  CHECK(miou(pred, gt, 2) == doctest::Approx((0.5 + 2.0 / 3.0) / 2).epsilon(1e-12));
  CHECK(accuracy(std::vector<int>{1, 2, 3}, std::vector<int>{1, 2, 3}) == 1.0);
  CHECK(accuracy(std::vector<int>{0, 0}, std::vector<int>{1, 1}) == 0.0);
  CHECK(accuracy(std::vector<int>{0, 1, 2, 3, 0, 1, 2, 3}, std::vector<int>{0, 1, 2, 3, 0, 0, 0, 0}) == 0.625);
  CHECK_THROWS_AS(accuracy(std::vector<int>{0}, std::vector<int>{0, 1}), DimensionError);
  CHECK_THROWS_AS(miou(pred, a, 2), InputError);
  CHECK_THROWS_AS(miou(pred, std::vector<std::uint8_t>{0}, 2), DimensionError);

  SUBCASE("confusion-matrix oracle on random masks") {
    Rng rng(3);
    for (int t = 0; t < 1000; ++t) {
      const std::size_t k = 2 + rng.below(7), n = 1 + rng.below(60);
      std::vector<std::uint8_t> p(n), g(n);
      for (auto& v : p) v = static_cast<std::uint8_t>(rng.below(k));
      for (auto& v : g) v = static_cast<std::uint8_t>(rng.below(k));
      // Direct set arithmetic per class.
      double s = 0;
      int present = 0;
      for (std::size_t c = 0; c < k; ++c) {
        int inter = 0, uni = 0;
        for (std::size_t i = 0; i < n; ++i) {
          inter += p[i] == c && g[i] == c;
          uni += p[i] == c || g[i] == c;
        }
        if (uni == 0) continue;
        s += double(inter) / uni;
        ++present;
      }
      CHECK(miou(p, g, k) == doctest::Approx(s / present).epsilon(1e-12));
      CHECK(miou(g, g, k) == 1.0);
      // Relabeling both masks with one permutation leaves mIOU unchanged.
      std::vector<std::uint8_t> perm(k);
      for (std::size_t c = 0; c < k; ++c) perm[c] = static_cast<std::uint8_t>(c);
      rng.shuffle(perm.begin(), perm.end());
      auto pp = p, gg = g;
      for (auto& v : pp) v = perm[v];
      for (auto& v : gg) v = perm[v];
      CHECK(miou(pp, gg, k) == doctest::Approx(miou(p, g, k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("train/val split") {
  auto [tr, va] = split_indices(20, 0.1, 7);
  CHECK(tr.size() == 18);
  CHECK(va.size() == 2);
  std::set<std::size_t> all(tr.begin(), tr.end());
  all.insert(va.begin(), va.end());
  CHECK(all.size() == 20);
  CHECK(split_indices(20, 0.1, 7) == std::make_pair(tr, va));
  CHECK(split_indices(1, 0.5, 7).first.size() == 1);
}

TEST_CASE("training loops") {
  const auto data = tiny_set(4, 64, 1);
  TrainConfig tc;
  tc.epochs = 2;
  tc.lr0 = 0.01;
  tc.momentum = 0.9;
  tc.batch_size = 2;
  tc.seed = 5;

  SUBCASE("identical seeds give identical runs") {
    auto run = [&] {
      Rng rng(1);
      model::YNet<float> net(tiny_net(), rng);
      auto r = train_segmentation(net, data, {data[0]}, tc);
      std::vector<float> flat;
      for (auto& [n, t] : net.named_state()) flat.insert(flat.end(), t.data().begin(), t.data().end());
      return std::make_pair(r, flat);
    };
    auto [r1, s1] = run();
    auto [r2, s2] = run();
    CHECK(s1 == s2);
    REQUIRE(r1.history.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
      CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
      CHECK(r1.history[e].val_loss == r2.history[e].val_loss);
    }
    CHECK(std::isfinite(r1.history[1].miou));
    CHECK(r1.best_state.size() > 0);
  }
  SUBCASE("lr = 0 leaves the parameters unchanged") {
    Rng rng(1);
    model::YNet<float> net(tiny_net(), rng);
    std::vector<float> before;
    for (auto& p : net.parameters()) before.insert(before.end(), p.data().begin(), p.data().end());
    tc.lr0 = 0;
    train_segmentation(net, data, {}, tc);
    std::vector<float> after;
    for (auto& p : net.parameters()) after.insert(after.end(), p.data().begin(), p.data().end());
    CHECK(before == after);
  }
  SUBCASE("joint stage") {
    Rng rng(1);
    model::YNet<float> net(tiny_net(), rng);
    CHECK_THROWS_AS(train_joint(net, data, {}, tc), StateError);
    net.attach_classification_head(rng);
    auto r = train_joint(net, data, {}, tc);
    REQUIRE(r.history.size() == 2);
    CHECK(r.history[0].seg_loss > 0);
    CHECK(r.history[0].cls_loss > 0);
    CHECK(r.history[0].train_loss == doctest::Approx(r.history[0].seg_loss + r.history[0].cls_loss).epsilon(1e-5));
    auto unlabeled = data;
    unlabeled[1].label = -1;
    CHECK_THROWS_AS(train_joint(net, unlabeled, {}, tc), DataError);
  }
  SUBCASE("errors") {
    Rng rng(1);
    model::YNet<float> net(tiny_net(), rng);
    CHECK_THROWS_AS(train_segmentation(net, {}, {}, tc), DataError);
    tc.batch_size = 0;
    CHECK_THROWS_AS(train_segmentation(net, data, {}, tc), ConfigError);
  }
  SUBCASE("early stop and history file") {
    Rng rng(1);
    model::YNet<float> net(tiny_net(), rng);
    tc.epochs = 30;
    tc.lr0 = 0.05;
    tc.augment = false;
    tc.stop_at_train_accuracy = 0.6;
    tc.check_every = 2;
    auto r = train_segmentation(net, data, {}, tc);
    CHECK(r.stopped_early);
    CHECK(r.history.back().train_accuracy >= 0.6);
    CHECK(r.history.size() < 30);
    CHECK(pixel_accuracy(net, data) == doctest::Approx(r.history.back().train_accuracy));
    const auto path = std::filesystem::temp_directory_path() / "ynet_hist.csv";
    write_history_csv(path, r.history, false);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "epoch,lr,train_loss,val_loss,miou");
    std::filesystem::remove(path);
  }
}
