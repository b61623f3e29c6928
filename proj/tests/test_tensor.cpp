#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "ynet/gradcheck.hpp"
#include "ynet/ops.hpp"
#include "ynet/optim.hpp"

using namespace ynet;
using test::random_tensor;

TEST_CASE("tensor shape bookkeeping") {
  auto t = Tensord::zeros({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.rank() == 3);
  CHECK_THROWS_AS(Tensord::from_data({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(t.dim(3), DimensionError);
  auto s = Tensord::scalar(2.5);
  CHECK(s.item() == 2.5);
  CHECK_THROWS_AS(t.item(), DimensionError);
}

TEST_CASE("non-finite values are rejected") {
  auto a = Tensord::from_data({2}, {1.0, 0.0});
  auto b = Tensord::from_data({2}, {std::numeric_limits<double>::infinity(), 1.0});
  CHECK_THROWS_AS(ops::add(a, b), NumericError);
}

TEST_CASE("conv2d first layer shape") {
  Rng rng(1);
  auto x = Tensorf::zeros({3, 384, 384});
  auto w = Tensorf::zeros({16, 3, 7, 7});
  ops::Conv2dOptions o;
  o.stride = 2;
  o.padding = 3;
  auto y = ops::conv2d(x, w, Tensorf(), o);
  CHECK(y.shape() == Shape{16, 192, 192});
}

TEST_CASE("conv2d identity kernel") {
  auto x = Tensord::full({1, 4, 4}, 2.0);
  auto w = Tensord::full({1, 1, 1, 1}, 1.0);
  auto y = ops::conv2d(x, w, Tensord());
  CHECK(y.shape() == Shape{1, 4, 4});
  for (double v : y.data()) CHECK(v == 2.0);
}

TEST_CASE("conv2d matches direct summation") {
  Rng rng(3);
  struct Case {
    std::size_t cin, cout, h, w, k, stride, pad, dil, groups;
    bool bias;
  };
  const Case cases[] = {
      {2, 3, 4, 4, 3, 1, 1, 1, 1, false},  // the reference case
      {3, 4, 7, 5, 3, 2, 1, 1, 1, true},   {4, 4, 9, 9, 3, 1, 2, 2, 1, false},
      {4, 6, 6, 6, 3, 1, 1, 1, 2, true},   {3, 2, 8, 8, 7, 2, 3, 1, 1, false},
      {5, 3, 5, 6, 1, 1, 0, 1, 1, true},   {2, 2, 11, 11, 3, 1, 8, 8, 1, false},
  };
  for (const auto& c : cases) {
    const std::size_t n = 2;
    auto x = random_tensor({n, c.cin, c.h, c.w}, rng);
    auto w = random_tensor({c.cout, c.cin / c.groups, c.k, c.k}, rng);
    Tensord b = c.bias ? random_tensor({c.cout}, rng) : Tensord();
    ops::Conv2dOptions o{c.stride, c.pad, c.dil, c.groups};
    auto y = ops::conv2d(x, w, b, o);
    const std::size_t img = c.cin * c.h * c.w;
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<double> xs(x.data().begin() + s * img, x.data().begin() + (s + 1) * img);
      std::vector<double> bias = c.bias ? std::vector<double>(b.data().begin(), b.data().end()) : std::vector<double>{};
      std::size_t ho, wo;
      auto ref = test::naive_conv(xs, c.cin, c.h, c.w, {w.data().begin(), w.data().end()}, c.cout, c.k, c.stride,
                                  c.pad, c.dil, c.groups, bias, ho, wo);
      REQUIRE(y.shape() == Shape{n, c.cout, ho, wo});
      std::vector<double> got(y.data().begin() + s * ref.size(), y.data().begin() + (s + 1) * ref.size());
      CHECK(test::max_abs_diff(got, ref) <= 1e-6);
    }
  }
}

TEST_CASE("conv2d errors") {
  auto x = Tensord::zeros({1, 4, 5, 5});
  CHECK_THROWS_AS(ops::conv2d(x, Tensord::zeros({2, 3, 3, 3}), Tensord()), DimensionError);
  ops::Conv2dOptions o;
  o.groups = 3;
  CHECK_THROWS_AS(ops::conv2d(x, Tensord::zeros({3, 1, 3, 3}), Tensord(), o), ConfigError);
  CHECK(ops::conv_out_size(384, 7, {2, 3, 1, 1}) == 192);
}

TEST_CASE("batch_norm") {
  Rng rng(5);
  auto rm = Tensord::zeros({3});
  auto rv = Tensord::full({3}, 1.0);

  SUBCASE("already normalized input is unchanged") {
    // Per channel: values +-1 in equal number -> mean 0, biased variance 1.
    std::vector<double> v(2 * 3 * 2 * 2);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 2) ? 1.0 : -1.0;
    auto x = Tensord::from_data({2, 3, 2, 2}, v);
    auto y = ops::batch_norm(x, Tensord::full({3}, 1.0), Tensord::zeros({3}), rm, rv, ops::BnMode::train);
    CHECK(test::max_abs_diff(y.data(), x.data()) <= 1e-5);
  }
  SUBCASE("zero scale gives beta") {
    auto x = random_tensor({2, 3, 4, 4}, rng);
    auto y = ops::batch_norm(x, Tensord::zeros({3}), Tensord::full({3}, 5.0), rm, rv, ops::BnMode::train);
    for (double v : y.data()) CHECK(v == 5.0);
  }
  SUBCASE("train mode output statistics") {
    auto x = random_tensor({2, 3, 4, 4}, rng, -3, 7);
    auto y = ops::batch_norm(x, Tensord::full({3}, 1.0), Tensord::zeros({3}), rm, rv, ops::BnMode::train);
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0, s2 = 0;
      int cnt = 0;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t p = 0; p < 16; ++p) {
          const double v = y.data()[(n * 3 + c) * 16 + p];
          s += v;
          s2 += v * v;
          ++cnt;
        }
      const double mean = s / cnt, var = s2 / cnt - mean * mean;
      CHECK(std::abs(mean) <= 1e-6);
      CHECK(std::abs(var - 1.0) <= 1e-4);
    }
  }
  SUBCASE("running statistics update and eval mode") {
    auto x = random_tensor({2, 3, 4, 4}, rng, 1, 3);
    // oracle: unbiased batch variance
    std::vector<double> mean(3, 0), var(3, 0);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t p = 0; p < 16; ++p) mean[c] += x.data()[(n * 3 + c) * 16 + p];
      mean[c] /= 32;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t p = 0; p < 16; ++p) var[c] += std::pow(x.data()[(n * 3 + c) * 16 + p] - mean[c], 2);
      var[c] /= 31;
    }
    ops::batch_norm(x, Tensord::full({3}, 1.0), Tensord::zeros({3}), rm, rv, ops::BnMode::train);
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(rm.data()[c] == doctest::Approx(0.1 * mean[c]).epsilon(1e-12));
      CHECK(rv.data()[c] == doctest::Approx(0.9 + 0.1 * var[c]).epsilon(1e-12));
    }
    auto g = Tensord::from_data({3}, {2, 3, 4});
    auto b = Tensord::from_data({3}, {-1, 0, 1});
    auto y = ops::batch_norm(x, g, b, rm, rv, ops::BnMode::eval);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const std::size_t c = (i / 16) % 3;
      const double ref = g.data()[c] * (x.data()[i] - rm.data()[c]) / std::sqrt(rv.data()[c] + 1e-5) + b.data()[c];
      CHECK(y.data()[i] == doctest::Approx(ref).epsilon(1e-12));
    }
  }
  SUBCASE("channel mismatch") {
    auto x = random_tensor({1, 4, 2, 2}, rng);
    CHECK_THROWS_AS(ops::batch_norm(x, Tensord::full({3}, 1.0), Tensord::zeros({3}), rm, rv, ops::BnMode::train),
                    DimensionError);
  }
  SUBCASE("eps must be positive") {
    auto x = random_tensor({1, 3, 2, 2}, rng);
    CHECK_THROWS_AS(
        ops::batch_norm(x, Tensord::full({3}, 1.0), Tensord::zeros({3}), rm, rv, ops::BnMode::train, 0.0),
        ConfigError);
  }
}

TEST_CASE("bilinear upsampling") {
  SUBCASE("constant preserved") {
    auto x = Tensord::full({2, 3, 5}, 5.0);
    auto y = ops::bilinear_upsample(x, 2);
    CHECK(y.shape() == Shape{2, 6, 10});
    for (double v : y.data()) CHECK(v == doctest::Approx(5.0).epsilon(1e-15));
  }
  SUBCASE("half-pixel row") {
    auto x = Tensord::from_data({1, 1, 2}, {0.0, 1.0});
    auto y = ops::bilinear_upsample(x, 2);
    REQUIRE(y.shape() == Shape{1, 2, 4});
    const double expect[] = {0.0, 0.25, 0.75, 1.0};
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t j = 0; j < 4; ++j) CHECK(y.data()[r * 4 + j] == doctest::Approx(expect[j]));
  }
  SUBCASE("output within input range") {
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
      auto x = random_tensor({2, 1 + rng.below(5), 1 + rng.below(5)}, rng, -4, 4);
      auto y = ops::bilinear_upsample(x, 2 + rng.below(3));
      auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
      for (double v : y.data()) {
        CHECK(v >= *lo - 1e-12);
        CHECK(v <= *hi + 1e-12);
      }
    }
  }
  SUBCASE("factor below 2") {
    CHECK_THROWS_AS(ops::bilinear_upsample(Tensord::zeros({1, 2, 2}), 1), ConfigError);
  }
  SUBCASE("resize matches hand oracle") {
    Rng rng(11);
    auto x = random_tensor({1, 1, 3, 4}, rng);
    auto y = ops::resize_bilinear(x, 5, 7);
    auto src = [](std::size_t dst, std::size_t in, std::size_t out) {
      double s = (dst + 0.5) * double(in) / double(out) - 0.5;
      return std::clamp(s, 0.0, double(in - 1));
    };
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 7; ++j) {
        const double sy = src(i, 3, 5), sx = src(j, 4, 7);
        const std::size_t y0 = std::size_t(sy), x0 = std::size_t(sx);
        const std::size_t y1 = std::min<std::size_t>(y0 + 1, 2), x1 = std::min<std::size_t>(x0 + 1, 3);
        const double fy = sy - y0, fx = sx - x0;
        auto at = [&](std::size_t r, std::size_t c) { return x.data()[r * 4 + c]; };
        const double ref = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
        CHECK(y.data()[i * 7 + j] == doctest::Approx(ref).epsilon(1e-12));
      }
  }
}

TEST_CASE("adaptive average pooling") {
  SUBCASE("global mean") {
    Rng rng(2);
    auto x = random_tensor({3, 12, 12}, rng);
    auto y = ops::adaptive_avg_pool(x, 1, 1);
    REQUIRE(y.shape() == Shape{3, 1, 1});
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < 144; ++i) s += x.data()[c * 144 + i];
      CHECK(y.data()[c] == doctest::Approx(s / 144).epsilon(1e-12));
    }
  }
  SUBCASE("row-index image") {
    std::vector<double> v(16);
    for (std::size_t i = 0; i < 16; ++i) v[i] = double(i / 4);
    auto y = ops::adaptive_avg_pool(Tensord::from_data({1, 4, 4}, v), 2, 2);
    const double expect[] = {0.5, 0.5, 2.5, 2.5};
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == expect[i]);
  }
  SUBCASE("identity") {
    Rng rng(4);
    auto x = random_tensor({2, 5, 3}, rng);
    auto y = ops::adaptive_avg_pool(x, 5, 3);
    CHECK(test::max_abs_diff(y.data(), x.data()) == 0.0);
  }
  SUBCASE("uneven bins against direct mean") {
    Rng rng(6);
    auto x = random_tensor({1, 1, 7, 10}, rng);
    auto y = ops::adaptive_avg_pool(x, 3, 6);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        const std::size_t r0 = i * 7 / 3, r1 = (i + 1) * 7 / 3, c0 = j * 10 / 6, c1 = (j + 1) * 10 / 6;
        double s = 0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t c = c0; c < c1; ++c) s += x.data()[r * 10 + c];
        CHECK(y.data()[i * 6 + j] == doctest::Approx(s / double((r1 - r0) * (c1 - c0))).epsilon(1e-12));
      }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(ops::adaptive_avg_pool(Tensord::zeros({1, 4, 4}), 0, 1), ConfigError);
    CHECK_THROWS_AS(ops::adaptive_avg_pool(Tensord::zeros({1, 4, 4}), 5, 1), ConfigError);
  }
}

TEST_CASE("linear") {
  Rng rng(8);
  SUBCASE("identity weight") {
    auto x = random_tensor({3, 4}, rng);
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
    auto y = ops::linear(x, Tensord::from_data({4, 4}, eye), Tensord::zeros({4}));
    CHECK(test::max_abs_diff(y.data(), x.data()) == 0.0);
  }
  SUBCASE("ones weight gives row sums") {
    auto x = random_tensor({3, 5}, rng);
    auto y = ops::linear(x, Tensord::full({1, 5}, 1.0), Tensord::zeros({1}));
    for (std::size_t n = 0; n < 3; ++n) {
      double s = 0;
      for (std::size_t f = 0; f < 5; ++f) s += x.data()[n * 5 + f];
      CHECK(y.data()[n] == doctest::Approx(s).epsilon(1e-14));
    }
  }
  SUBCASE("triple loop oracle") {
    auto x = random_tensor({2, 5}, rng);
    auto w = random_tensor({3, 5}, rng);
    auto b = random_tensor({3}, rng);
    auto y = ops::linear(x, w, b);
    std::vector<double> ref(6);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t o = 0; o < 3; ++o) {
        double s = b.data()[o];
        for (std::size_t f = 0; f < 5; ++f) s += x.data()[n * 5 + f] * w.data()[o * 5 + f];
        ref[n * 3 + o] = s;
      }
    CHECK(test::max_abs_diff(y.data(), ref) <= 1e-6);
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(ops::linear(Tensord::zeros({2, 5}), Tensord::zeros({3, 4}), Tensord()), DimensionError);
  }
}

TEST_CASE("relu, add, concat") {
  auto x = Tensord::from_data({1, 2, 1, 2}, {-1.0, 2.0, 0.0, -3.5});
  auto r = ops::relu(x);
  const double expect[] = {0.0, 2.0, 0.0, 0.0};
  for (int i = 0; i < 4; ++i) CHECK(r.data()[i] == expect[i]);

  auto z = Tensord::zeros({1, 2, 1, 2});
  CHECK(test::max_abs_diff(ops::add(x, z).data(), x.data()) == 0.0);
  CHECK_THROWS_AS(ops::add(x, Tensord::zeros({1, 2, 2, 1})), DimensionError);

  Rng rng(12);
  auto a = random_tensor({2, 2, 3, 3}, rng);
  auto b = random_tensor({2, 3, 3, 3}, rng);
  auto c = ops::concat_channels(a, b);
  REQUIRE(c.shape() == Shape{2, 5, 3, 3});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t ch = 0; ch < 5; ++ch)
      for (std::size_t p = 0; p < 9; ++p) {
        const double ref = ch < 2 ? a.data()[(n * 2 + ch) * 9 + p] : b.data()[(n * 3 + ch - 2) * 9 + p];
        CHECK(c.data()[(n * 5 + ch) * 9 + p] == ref);
      }
  CHECK_THROWS_AS(ops::concat_channels(a, random_tensor({2, 1, 3, 4}, rng)), DimensionError);
}

TEST_CASE("softmax cross-entropy") {
  SUBCASE("uniform logits") {
    std::vector<std::int32_t> t4 = {0, 3, 1};
    CHECK(ops::softmax_cross_entropy(Tensord::zeros({3, 4}), t4).item() == doctest::Approx(std::log(4.0)));
    std::vector<std::int32_t> t8(2 * 3 * 3, 5);
    CHECK(ops::softmax_cross_entropy(Tensord::zeros({2, 8, 3, 3}), t8).item() ==
          doctest::Approx(std::log(8.0)).epsilon(1e-12));
  }
  SUBCASE("confident correct") {
    // ln(1 + 3 e^-10) = 1.362e-4
    std::vector<std::int32_t> t = {0};
    const double l = ops::softmax_cross_entropy(Tensord::from_data({1, 4}, {10, 0, 0, 0}), t).item();
    CHECK(l == doctest::Approx(std::log1p(3 * std::exp(-10.0))).epsilon(1e-12));
    CHECK(l <= 2e-4);
  }
  SUBCASE("large logits are stable") {
    std::vector<std::int32_t> t = {1};
    auto l = ops::softmax_cross_entropy(Tensord::from_data({1, 2}, {1000.0, 0.0}), t);
    CHECK(l.item() == doctest::Approx(1000.0));
  }
  SUBCASE("ignore label and weights against oracle") {
    Rng rng(13);
    auto logits = random_tensor({2, 3, 2, 2}, rng, -2, 2);
    std::vector<std::int32_t> t = {0, 1, 255, 2, 2, 255, 1, 0};
    ops::CrossEntropyOptions opt;
    opt.ignore_label = 255;
    opt.class_weights = {1.0, 2.0, 0.5};
    double num = 0, den = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t p = 0; p < 4; ++p) {
        const int lab = t[n * 4 + p];
        if (lab == 255) continue;
        double m = -1e300, z = 0;
        for (std::size_t c = 0; c < 3; ++c) m = std::max(m, logits.data()[(n * 3 + c) * 4 + p]);
        for (std::size_t c = 0; c < 3; ++c) z += std::exp(logits.data()[(n * 3 + c) * 4 + p] - m);
        const double nll = -(logits.data()[(n * 3 + lab) * 4 + p] - m - std::log(z));
        num += opt.class_weights[lab] * nll;
        den += opt.class_weights[lab];
      }
    CHECK(ops::softmax_cross_entropy(logits, t, opt).item() == doctest::Approx(num / den).epsilon(1e-12));
  }
  SUBCASE("errors") {
    std::vector<std::int32_t> bad = {4};
    CHECK_THROWS_AS(ops::softmax_cross_entropy(Tensord::zeros({1, 4}), bad), InputError);
    std::vector<std::int32_t> ign = {7, 7};
    ops::CrossEntropyOptions opt;
    opt.ignore_label = 7;
    CHECK_THROWS_AS(ops::softmax_cross_entropy(Tensord::zeros({2, 4}), ign, opt), InputError);
  }
}

TEST_CASE("softmax") {
  auto p = ops::softmax<double>(std::vector<double>{0, 0, 0, 0});
  for (double v : p) CHECK(v == doctest::Approx(0.25));
  auto a = ops::softmax<double>(std::vector<double>{1, 2, 3, 4});
  auto b = ops::softmax<double>(std::vector<double>{11, 12, 13, 14});
  CHECK(test::max_abs_diff(a, b) <= 1e-15);
  auto c = ops::softmax<double>(std::vector<double>{0, std::log(3.0)});
  CHECK(c[0] == doctest::Approx(0.25));
  CHECK(c[1] == doctest::Approx(0.75));

  Rng rng(21);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> z(2 + rng.below(8));
    for (auto& v : z) v = rng.uniform(-50, 50);
    auto s = ops::softmax<double>(z);
    double sum = 0;
    for (double v : s) {
      CHECK(v > 0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
    CHECK(std::max_element(s.begin(), s.end()) - s.begin() == std::max_element(z.begin(), z.end()) - z.begin());
  }
}

TEST_CASE("sgd") {
  SUBCASE("single step") {
    auto p = Tensord::from_data({1}, {1.0}, true);
    p.node().grad_buffer()[0] = 0.5;
    std::vector<Tensord> ps{p};
    sgd_step(ps, 0.1);
    CHECK(p.data()[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK_FALSE(p.has_grad());
  }
  SUBCASE("zero lr") {
    auto p = Tensord::from_data({2}, {1.0, -2.0}, true);
    p.node().grad_buffer()[0] = 3.0;
    p.node().grad_buffer()[1] = 4.0;
    std::vector<Tensord> ps{p};
    sgd_step(ps, 0.0);
    CHECK(p.data()[0] == 1.0);
    CHECK(p.data()[1] == -2.0);
  }
  SUBCASE("quadratic contraction") {
    auto p = Tensord::from_data({1}, {1.0}, true);
    Sgd<double> opt({p}, 0.4);
    for (int i = 0; i < 50; ++i) {
      auto f = ops::linear(p.reshape({1, 1}), p.reshape({1, 1}), Tensord());  // p*p
      f.reshape({}).backward();
      opt.step();
    }
    CHECK(std::abs(p.data()[0]) <= 1e-3);
  }
  SUBCASE("missing gradient") {
    auto p = Tensord::from_data({1}, {1.0}, true);
    std::vector<Tensord> ps{p};
    CHECK_THROWS_AS(sgd_step(ps, 0.1), OptimizerError);
  }
  SUBCASE("zero momentum equals plain sgd") {
    Rng rng(3);
    auto p1 = random_tensor({5}, rng, -1, 1, true);
    auto p2 = p1.clone();
    p2.set_requires_grad(true);
    Sgd<double> opt({p2}, 0.05, 0.0);
    for (int it = 0; it < 3; ++it) {
      for (std::size_t i = 0; i < 5; ++i) {
        p1.node().grad_buffer()[i] = 0.1 * (i + it);
        p2.node().grad_buffer()[i] = 0.1 * (i + it);
      }
      std::vector<Tensord> ps{p1};
      sgd_step(ps, 0.05);
      opt.step();
    }
    CHECK(test::max_abs_diff(p1.data(), p2.data()) == 0.0);
  }
  SUBCASE("bad hyper-parameters") {
    auto p = Tensord::from_data({1}, {1.0}, true);
    CHECK_THROWS_AS(Sgd<double>({p}, -1.0), ConfigError);
    CHECK_THROWS_AS(Sgd<double>({p}, 0.1, 1.0), ConfigError);
  }
}

TEST_CASE("autograd graph semantics") {
  SUBCASE("fan-out accumulates") {
    // f = sum(relu(x) + x) -> df/dx = 1[x>0] + 1
    auto x = Tensord::from_data({1, 1, 1, 3}, {-1.0, 0.5, 2.0}, true);
    auto y = ops::add(ops::relu(x), x);
    std::vector<double> seed(3, 1.0);
    y.backward(seed);
    CHECK(x.grad()[0] == 1.0);
    CHECK(x.grad()[1] == 2.0);
    CHECK(x.grad()[2] == 2.0);
  }
  SUBCASE("no grad mode records nothing") {
    auto x = Tensord::from_data({1, 1, 1, 1}, {1.0}, true);
    NoGradGuard guard;
    auto y = ops::relu(x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node().parents.empty());
  }
  SUBCASE("deterministic outputs") {
    Rng r1(5), r2(5);
    auto x1 = random_tensor({2, 3, 6, 6}, r1);
    auto w1 = random_tensor({4, 3, 3, 3}, r1);
    auto x2 = random_tensor({2, 3, 6, 6}, r2);
    auto w2 = random_tensor({4, 3, 3, 3}, r2);
    ops::Conv2dOptions o;
    o.padding = 1;
    auto a = ops::conv2d(x1, w1, Tensord(), o);
    auto b = ops::conv2d(x2, w2, Tensord(), o);
    CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  }
}

// ---- finite-difference checks ---------------------------------------------

namespace {

void expect_grad_ok(const std::string& name, const std::function<Tensord()>& fn, std::vector<Tensord> wrt,
                    double tol = 1e-4) {
  GradCheckOptions opt;
  opt.tolerance = tol;
  auto rep = grad_check(name, fn, std::move(wrt), opt);
  INFO(name << " max rel " << rep.max_rel_error << " abs " << rep.max_abs_error);
  CHECK(rep.passed);
  CHECK(rep.elements_checked > 0);
}

// Values bounded away from zero so ReLU kinks are never straddled by +-h.
Tensord away_from_zero(Shape s, Rng& rng) {
  auto t = random_tensor(std::move(s), rng, 0.1, 1.0, true);
  for (auto& v : t.data()) v = rng.bernoulli(0.5) ? v : -v;
  return t;
}

}  // namespace

TEST_CASE("gradient checks for every op") {
  Rng rng(17);
  SUBCASE("conv2d 2x5x5") {
    auto x = random_tensor({1, 2, 5, 5}, rng, -1, 1, true);
    auto w = random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
    auto b = random_tensor({3}, rng, -1, 1, true);
    ops::Conv2dOptions o;
    o.padding = 1;
    expect_grad_ok("conv2d", [&] { return ops::conv2d(x, w, b, o); }, {x, w, b});
  }
  SUBCASE("conv2d strided dilated grouped") {
    auto x = random_tensor({2, 4, 6, 6}, rng, -1, 1, true);
    auto w = random_tensor({4, 2, 3, 3}, rng, -1, 1, true);
    expect_grad_ok("conv2d/stride2", [&] { return ops::conv2d(x, w, Tensord(), {2, 1, 1, 2}); }, {x, w});
    expect_grad_ok("conv2d/dil2", [&] { return ops::conv2d(x, w, Tensord(), {1, 2, 2, 2}); }, {x, w});
    auto w1 = random_tensor({3, 4, 1, 1}, rng, -1, 1, true);
    expect_grad_ok("conv2d/1x1", [&] { return ops::conv2d(x, w1, Tensord()); }, {x, w1});
  }
  SUBCASE("batch_norm train and eval") {
    auto x = random_tensor({2, 3, 3, 2}, rng, -2, 2, true);
    auto g = random_tensor({3}, rng, 0.5, 1.5, true);
    auto b = random_tensor({3}, rng, -1, 1, true);
    auto rm = Tensord::zeros({3});
    auto rv = Tensord::full({3}, 1.0);
    expect_grad_ok("batch_norm/train", [&] { return ops::batch_norm(x, g, b, rm, rv, ops::BnMode::train); },
                   {x, g, b});
    expect_grad_ok("batch_norm/eval", [&] { return ops::batch_norm(x, g, b, rm, rv, ops::BnMode::eval); }, {x, g, b});
  }
  SUBCASE("relu add concat") {
    auto x = away_from_zero({1, 2, 3, 3}, rng);
    auto y = random_tensor({1, 2, 3, 3}, rng, -1, 1, true);
    auto z = random_tensor({1, 1, 3, 3}, rng, -1, 1, true);
    expect_grad_ok("relu", [&] { return ops::relu(x); }, {x});
    expect_grad_ok("add", [&] { return ops::add(x, y); }, {x, y});
    expect_grad_ok("concat", [&] { return ops::concat_channels(x, z); }, {x, z});
    expect_grad_ok("fan-out", [&] { return ops::add(ops::relu(x), ops::concat_channels(z, z).reshape({1, 2, 3, 3})); },
                   {x, z});
  }
  SUBCASE("resampling") {
    auto x = random_tensor({1, 2, 3, 4}, rng, -1, 1, true);
    expect_grad_ok("bilinear_upsample", [&] { return ops::bilinear_upsample(x, 2); }, {x});
    expect_grad_ok("resize_bilinear/down", [&] { return ops::resize_bilinear(x, 2, 3); }, {x});
    expect_grad_ok("resize_bilinear/up", [&] { return ops::resize_bilinear(x, 5, 6); }, {x});
    auto p = random_tensor({1, 2, 6, 5}, rng, -1, 1, true);
    expect_grad_ok("adaptive_avg_pool", [&] { return ops::adaptive_avg_pool(p, 3, 2); }, {p});
  }
  SUBCASE("linear and flatten") {
    auto x = random_tensor({2, 5}, rng, -1, 1, true);
    auto w = random_tensor({3, 5}, rng, -1, 1, true);
    auto b = random_tensor({3}, rng, -1, 1, true);
    GradCheckOptions tight;
    tight.tolerance = 1e-6;
    auto rep = grad_check("linear", [&] { return ops::linear(x, w, b); }, {x, w, b}, tight);
    CHECK(rep.passed);
    CHECK(rep.max_rel_error <= 1e-6);
    auto t = random_tensor({2, 2, 2, 2}, rng, -1, 1, true);
    expect_grad_ok("flatten", [&] { return ops::flatten(t); }, {t});
  }
  SUBCASE("cross-entropy") {
    auto l2 = random_tensor({3, 4}, rng, -2, 2, true);
    std::vector<std::int32_t> t2 = {0, 3, 2};
    expect_grad_ok("softmax_cross_entropy/vector", [&] { return ops::softmax_cross_entropy(l2, t2); }, {l2});
    auto l4 = random_tensor({2, 3, 2, 2}, rng, -2, 2, true);
    std::vector<std::int32_t> t4 = {0, 1, 9, 2, 2, 9, 1, 0};
    ops::CrossEntropyOptions opt;
    opt.ignore_label = 9;
    opt.class_weights = {0.5, 1.0, 2.0};
    expect_grad_ok("softmax_cross_entropy/map", [&] { return ops::softmax_cross_entropy(l4, t4, opt); }, {l4});
  }
  SUBCASE("constant function") {
    auto x = random_tensor({2, 3}, rng, -1, 1, true);
    auto w = Tensord::zeros({2, 3});
    auto rep = grad_check("zero-weight linear", [&] { return ops::linear(x, w, Tensord()); }, {x});
    CHECK(rep.passed);
    CHECK(rep.max_abs_error == 0.0);
    for (double g : x.grad()) CHECK(g == 0.0);
  }
}

TEST_CASE("grad_check flags a wrong backward") {
  auto x = Tensord::from_data({3}, {0.3, -0.7, 1.1}, true);
  auto faulty = [&] {
    std::vector<double> y(3);
    for (int i = 0; i < 3; ++i) y[i] = x.data()[i] * x.data()[i];
    return Tensord::make_result("faulty_square", {3}, y, {x}, [](Tensord::Node& self) {
      auto gx = self.parents[0]->grad_buffer();
      for (int i = 0; i < 3; ++i) gx[i] += self.grad[i] * self.parents[0]->data[i];  // missing factor 2
    });
  };
  auto rep = grad_check("faulty_square", faulty, {x});
  CHECK_FALSE(rep.passed);
  CHECK_THROWS_AS(require_passed(rep), NumericError);
  try {
    require_passed(rep);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("faulty_square") != std::string::npos);
  }
}
