#include "ynet/model/gradcheck_suite.hpp"

#include <string>

#include "ynet/model/ynet.hpp"
#include "ynet/ops.hpp"

namespace ynet::model {

namespace {

Tensord uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensord::from_data(std::move(s), std::move(v), true);
}

// Magnitudes in [0.1, 1] with random sign, so +-h never straddles a ReLU kink.
Tensord away_from_zero(Shape s, Rng& rng) {
  auto t = uniform(std::move(s), rng, 0.1, 1.0);
  for (auto& v : t.data()) v = rng.bernoulli(0.5) ? v : -v;
  return t;
}

std::vector<Tensord> with_params(Tensord x, const nn::Module<double>& m) {
  std::vector<Tensord> wrt{std::move(x)};
  for (auto& p : m.parameters()) wrt.push_back(p);
  return wrt;
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(const GradSuiteOptions& opt,
                                                 const std::function<void(const GradCheckReport&)>& on_report) {
  std::vector<GradCheckReport> out;
  GradCheckOptions gopt;
  gopt.tolerance = opt.tolerance;
  auto check = [&](const std::string& name, const std::function<Tensord()>& fn, std::vector<Tensord> wrt) {
    out.push_back(grad_check(name, fn, std::move(wrt), gopt));
    if (on_report) on_report(out.back());
  };
  Rng rng(opt.seed);

  // ops
  {
    auto x = uniform({1, 2, 5, 5}, rng);
    auto w = uniform({3, 2, 3, 3}, rng);
    auto b = uniform({3}, rng);
    check("conv2d", [&] { return ops::conv2d(x, w, b, {1, 1, 1, 1}); }, {x, w, b});
    auto xg = uniform({2, 4, 6, 6}, rng);
    auto wg = uniform({4, 2, 3, 3}, rng);
    check("conv2d/stride2-grouped", [&] { return ops::conv2d(xg, wg, Tensord(), {2, 1, 1, 2}); }, {xg, wg});
    check("conv2d/dilated", [&] { return ops::conv2d(xg, wg, Tensord(), {1, 2, 2, 2}); }, {xg, wg});
    auto w1 = uniform({3, 4, 1, 1}, rng);
    check("conv2d/1x1", [&] { return ops::conv2d(xg, w1, Tensord()); }, {xg, w1});
  }
  {
    auto x = uniform({2, 3, 3, 2}, rng, -2, 2);
    auto g = uniform({3}, rng, 0.5, 1.5);
    auto b = uniform({3}, rng);
    auto rm = Tensord::zeros({3});
    auto rv = Tensord::full({3}, 1.0);
    check("batch_norm/train", [&] { return ops::batch_norm(x, g, b, rm, rv, ops::BnMode::train); }, {x, g, b});
    check("batch_norm/eval", [&] { return ops::batch_norm(x, g, b, rm, rv, ops::BnMode::eval); }, {x, g, b});
  }
  {
    auto x = away_from_zero({1, 2, 3, 3}, rng);
    auto y = uniform({1, 2, 3, 3}, rng);
    auto z = uniform({1, 1, 3, 3}, rng);
    check("relu", [&] { return ops::relu(x); }, {x});
    check("add", [&] { return ops::add(x, y); }, {x, y});
    check("concat_channels", [&] { return ops::concat_channels(x, z); }, {x, z});
    if (opt.corrupt_backward) {
      // ReLU whose backward drops half of the gradient.
      check("relu/corrupted-backward",
            [&] {
              std::vector<double> v(x.numel());
              for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(0.0, x.data()[i]);
              return Tensord::make_result("relu/corrupted-backward", x.shape(), std::move(v), {x},
                                          [](Tensord::Node& self) {
                                            auto& in = *self.parents[0];
                                            auto g = in.grad_buffer();
                                            for (std::size_t i = 0; i < g.size(); ++i)
                                              if (in.data[i] > 0) g[i] += 0.5 * self.grad[i];
                                          });
            },
            {x});
    }
  }
  {
    auto x = uniform({1, 2, 3, 4}, rng);
    check("bilinear_upsample", [&] { return ops::bilinear_upsample(x, 2); }, {x});
    check("resize_bilinear/down", [&] { return ops::resize_bilinear(x, 2, 3); }, {x});
    check("resize_bilinear/up", [&] { return ops::resize_bilinear(x, 5, 6); }, {x});
    auto p = uniform({1, 2, 6, 5}, rng);
    check("adaptive_avg_pool", [&] { return ops::adaptive_avg_pool(p, 3, 2); }, {p});
  }
  {
    auto x = uniform({2, 5}, rng);
    auto w = uniform({3, 5}, rng);
    auto b = uniform({3}, rng);
    check("linear", [&] { return ops::linear(x, w, b); }, {x, w, b});
    auto t = uniform({2, 2, 2, 2}, rng);
    check("flatten", [&] { return ops::flatten(t); }, {t});
    auto l2 = uniform({3, 4}, rng, -2, 2);
    std::vector<std::int32_t> t2{0, 3, 2};
    check("softmax_cross_entropy", [&] { return ops::softmax_cross_entropy(l2, t2); }, {l2});
    auto l4 = uniform({2, 3, 2, 2}, rng, -2, 2);
    std::vector<std::int32_t> t4{0, 1, 9, 2, 2, 9, 1, 0};
    ops::CrossEntropyOptions ce;
    ce.ignore_label = 9;
    ce.class_weights = {0.5, 1.0, 2.0};
    check("softmax_cross_entropy/weighted-ignore", [&] { return ops::softmax_cross_entropy(l4, t4, ce); }, {l4});
  }

  // blocks
  {
    Rng r(derive_seed(opt.seed, 1));
    nn::RcbBlock<double> rcb(8, 8, r);
    auto x1 = uniform({1, 8, 6, 6}, rng);
    check("block/rcb", [&] { return rcb.forward(x1); }, with_params(x1, rcb));
    nn::RcbBlock<double> rcb_proj(4, 8, r);
    auto x2 = uniform({2, 4, 5, 5}, rng);
    check("block/rcb-projection", [&] { return rcb_proj.forward(x2); }, with_params(x2, rcb_proj));
    nn::EspBlock<double> esp(8, 8, r);
    auto x3 = uniform({1, 8, 7, 7}, rng);
    check("block/esp", [&] { return esp.forward(x3); }, with_params(x3, esp));
    nn::EspBlock<double> esp_wide(4, 8, r);
    auto x4 = uniform({2, 4, 6, 6}, rng);
    check("block/esp-no-residual", [&] { return esp_wide.forward(x4); }, with_params(x4, esp_wide));
    // Batch of 2 keeps the 1x1 pooling bin's BN off the ReLU kink.
    nn::PspBlock<double> psp(8, 8, r);
    auto x5 = uniform({2, 8, 12, 12}, rng);
    check("block/psp", [&] { return psp.forward(x5); }, with_params(x5, psp));
  }

  // encoder level under each sharing mode
  for (Sharing s : {Sharing::none, Sharing::add, Sharing::concat}) {
    Rng r(derive_seed(opt.seed, 2));
    EncoderLevel<double> level(3, 4, 1, nn::BlockKind::esp, s, r);
    auto x = uniform({2, 3, 8, 8}, rng);
    check("encoder_level/" + std::string(sharing_name(s)), [&] { return level.forward(x); }, with_params(x, level));
  }

  // whole network, both arms, through the multi-task loss
  {
    NetworkConfig nc;
    nc.w = 8;
    nc.d = 1;
    nc.encoder = nn::BlockKind::esp;
    nc.decoder = nn::BlockKind::rcb;
    Rng r(derive_seed(opt.seed, 3));
    YNet<double> net(nc, r);
    net.attach_classification_head(r);
    auto x = uniform({2, 3, 32, 32}, rng);
    std::vector<std::int32_t> seg_t(2 * 32 * 32), cls_t{1, 3};
    for (auto& v : seg_t) v = static_cast<std::int32_t>(rng.below(nc.tissue_classes));
    check("ynet/joint-loss",
          [&] {
            auto [seg, cls] = net.forward_joint(x);
            return multi_task_loss(seg, seg_t, cls, cls_t).total;
          },
          {x});
  }
  return out;
}

}  // namespace ynet::model
