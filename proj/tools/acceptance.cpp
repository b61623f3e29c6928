// Acceptance runner: one PASS/FAIL line per criterion.
//   acceptance                 all criteria
//   acceptance --criterion 4   a single one (repeatable)
#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <set>
#include <sstream>

#include "ynet/diagnosis/features.hpp"
#include "ynet/error.hpp"
#include "ynet/model/checkpoint.hpp"
#include "ynet/model/gradcheck_suite.hpp"
#include "ynet/pipeline/pipeline.hpp"
#include "ynet/train/metrics.hpp"

using namespace ynet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t joint_count(model::NetworkConfig c) {
  Rng rng(0);
  model::YNet<float> net(c, rng);
  net.attach_classification_head(rng);
  return net.param_count();
}

std::size_t seg_count(model::NetworkConfig c) {
  Rng rng(0);
  model::YNet<float> net(c, rng);
  return net.seg_param_count();
}

model::NetworkConfig net_cfg(std::size_t w, std::size_t d, nn::BlockKind enc, nn::BlockKind dec,
                             model::Sharing s = model::Sharing::concat) {
  model::NetworkConfig c;
  c.w = w;
  c.d = d;
  c.encoder = enc;
  c.decoder = dec;
  c.sharing = s;
  return c;
}

using nn::BlockKind;
using model::Sharing;

// ---- 1. parameter counts ----------------------------------------------------

Outcome criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto esp_psp = net_cfg(128, 5, BlockKind::esp, BlockKind::psp);
  const auto rcb_psp = net_cfg(128, 5, BlockKind::rcb, BlockKind::psp);
  const double seg = double(seg_count(esp_psp));
  const double joint = double(joint_count(esp_psp));
  const double ratio = double(joint_count(rcb_psp)) / joint;
  const double secs = seconds_since(t0);
  const bool seg_ok = std::abs(seg / 2.75e6 - 1.0) <= 0.2;
  const bool joint_ok = std::abs(joint / 3.91e6 - 1.0) <= 0.2;
  const bool ratio_ok = ratio >= 2.2 && ratio <= 3.3;
  std::ostringstream s;
  s << "ESP-PSP w=128 d=5 seg " << std::size_t(seg) << " (" << fmt("%+.1f%%", 100 * (seg / 2.75e6 - 1)) << " vs 2.75M, "
    << (seg_ok ? "ok" : "outside +-20%") << "), joint " << std::size_t(joint) << " (" << fmt("%+.1f%%", 100 * (joint / 3.91e6 - 1))
    << " vs 3.91M, " << (joint_ok ? "ok" : "outside +-20%") << "), RCB-PSP/ESP-PSP joint ratio "
    << fmt("%.3f", ratio) << (ratio_ok ? " (in [2.2, 3.3])" : " (outside [2.2, 3.3])") << ", " << fmt("%.2f", secs)
    << " s";
  return {seg_ok && joint_ok && ratio_ok && secs < 10.0, s.str()};
}

// ---- 2. gradient suite ------------------------------------------------------

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto reports = model::run_gradcheck_suite();
  const double secs = seconds_since(t0);
  double worst = 0;
  std::string worst_name, failed;
  for (const auto& r : reports) {
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (!r.passed || r.max_rel_error > 1e-4) failed += " " + r.name;
  }
  std::ostringstream s;
  s << reports.size() << " ops/blocks checked, worst max rel error " << fmt("%.2e", worst) << " (" << worst_name
    << ")";
  if (!failed.empty()) s << ", failed:" << failed;
  s << ", " << fmt("%.1f", secs) << " s";
  return {failed.empty() && secs < 120.0, s.str()};
}

// ---- 3. shapes and topology ---------------------------------------------------

Outcome criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> problems;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };
  {
    Rng rng(3);
    model::YNet<float> net(net_cfg(32, 2, BlockKind::esp, BlockKind::psp), rng);
    net.attach_classification_head(rng);
    net.set_training(false);
    NoGradGuard ng;
    const std::size_t sizes[] = {96, 160, 384};
    for (std::size_t h : sizes)
      for (std::size_t w : sizes) {
        if (h == 384 && w != 384) continue;  // keeps the suite quick; 384x384 covers the large case
        if (w == 384 && h != 384) continue;
        Rng r(h * 1000 + w);
        std::vector<float> v(2 * 3 * h * w);
        for (auto& x : v) x = static_cast<float>(r.uniform());
        const auto x = Tensorf::from_data({2, 3, h, w}, v);
        const auto seg = net.forward_seg(x);
        const std::string tag = std::to_string(h) + "x" + std::to_string(w);
        expect(seg.shape() == Shape{2, 8, h, w}, "seg shape at " + tag);
        auto [s2, cls] = net.forward_joint(x);
        expect(s2.shape() == Shape{2, 8, h, w}, "joint seg shape at " + tag);
        expect(cls.shape() == Shape{2, 4}, "cls shape at " + tag);
        bool finite = true;
        for (float f : cls.data()) finite = finite && std::isfinite(f);
        expect(finite, "finite logits at " + tag);
      }
    bool threw = false;
    try {
      net.forward_seg(Tensorf::zeros({1, 3, 100, 100}));
    } catch (const ShapeError&) {
      threw = true;
    }
    expect(threw, "ShapeError for 100x100");
  }
  std::size_t steps = 0;
  for (BlockKind enc : {BlockKind::esp, BlockKind::rcb})
    for (BlockKind dec : {BlockKind::esp, BlockKind::rcb, BlockKind::psp})
      for (Sharing sh : {Sharing::none, Sharing::add, Sharing::concat}) {
        Rng rng(7);
        model::YNet<float> net(net_cfg(16, 1, enc, dec, sh), rng);
        net.attach_classification_head(rng);
        const std::size_t S = 96;
        train::Sample a, b;
        for (auto* s : {&a, &b}) {
          s->size = S;
          s->rgb.resize(3 * S * S);
          s->mask.resize(S * S);
          for (auto& v : s->rgb) v = static_cast<std::uint8_t>(rng.below(256));
          for (auto& v : s->mask) v = static_cast<std::uint8_t>(rng.below(8));
          s->label = static_cast<int>(rng.below(4));
        }
        train::TrainConfig tc;
        tc.epochs = 1;
        tc.batch_size = 2;
        tc.lr0 = 1e-3;
        const std::string tag = std::string(nn::block_kind_name(enc)) + "-" + std::string(nn::block_kind_name(dec)) +
                                "/" + std::string(model::sharing_name(sh));
        try {
          const auto r = train::train_joint(net, {a, b}, {}, tc);
          expect(r.history.size() == 1 && std::isfinite(r.history[0].train_loss), "train step " + tag);
          ++steps;
        } catch (const std::exception& e) {
          problems.push_back("train step " + tag + ": " + e.what());
        }
      }
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << "forward contracts at 96/160/384, " << steps << "/18 (encoder, decoder, sharing) joint train steps";
  if (!problems.empty()) {
    s << "; problems:";
    for (const auto& p : problems) s << " [" << p << "]";
  }
  s << ", " << fmt("%.1f", secs) << " s";
  return {problems.empty() && steps == 18 && secs < 300.0, s.str()};
}

// ---- 4 and 7. overfitting and determinism ---------------------------------------

train::Sample synth_instance(std::uint64_t seed, int target) {
  synth::SynthConfig sc;
  sc.roi_size = 384;
  const auto r = synth::generate_roi(sc, seed, target);
  const auto grid = tiling::make_grid(384, 384);
  return pipeline::roi_instances(r.image, r.mask, r.label, grid).at(0);
}

struct OverfitRun {
  double seg_accuracy = 0;
  std::size_t seg_epochs = 0;
  double seg0 = 0, seg_end = 0, cls0 = 0, cls_end = 0;
  std::string seg_checkpoint, joint_checkpoint;
  std::vector<train::EpochRecord> seg_history, joint_history;
  double seconds = 0;
};

constexpr std::size_t kJointEpochs = 30;

OverfitRun overfit_run() {
  const auto t0 = std::chrono::steady_clock::now();
  OverfitRun out;
  train::TrainConfig tc;
  tc.epochs = 200;
  tc.lr0 = 0.05;
  tc.momentum = 0.9;
  tc.augment = false;
  tc.batch_size = 4;
  tc.seed = 11;
  {
    std::vector<train::Sample> data;
    for (int i = 0; i < 8; ++i) data.push_back(synth_instance(1000 + i, i % 4));
    Rng rng(1);
    model::YNet<float> net(net_cfg(32, 2, BlockKind::esp, BlockKind::psp), rng);
    auto c = tc;
    c.stop_at_train_accuracy = 0.99;
    c.check_every = 5;
    const auto r = train::train_segmentation(net, data, {}, c);
    out.seg_accuracy = train::pixel_accuracy(net, data);
    out.seg_epochs = r.history.size();
    out.seg_history = r.history;
    out.seg_checkpoint = model::serialize_checkpoint(net.named_state(), net.config().to_json());
  }
  {
    std::vector<train::Sample> data;
    for (int i = 0; i < 16; ++i) data.push_back(synth_instance(2000 + i, i % 4));
    Rng rng(2);
    model::YNet<float> net(net_cfg(32, 2, BlockKind::esp, BlockKind::psp), rng);
    net.attach_classification_head(rng);
    auto c = tc;
    c.epochs = kJointEpochs;
    const auto r = train::train_joint(net, data, {}, c);
    out.seg0 = r.history.front().seg_loss;
    out.seg_end = r.history.back().seg_loss;
    out.cls0 = r.history.front().cls_loss;
    out.cls_end = r.history.back().cls_loss;
    out.joint_history = r.history;
    out.joint_checkpoint = model::serialize_checkpoint(net.named_state(), net.config().to_json());
  }
  out.seconds = seconds_since(t0);
  return out;
}

Outcome criterion4(const OverfitRun& r) {
  const bool seg_ok = r.seg_accuracy >= 0.99;
  const bool seg_drop = r.seg_end <= 0.5 * r.seg0, cls_drop = r.cls_end <= 0.5 * r.cls0;
  std::ostringstream s;
  s << "seg-only: train pixel accuracy " << fmt("%.4f", r.seg_accuracy) << " after " << r.seg_epochs
    << " epoch(s); joint on 16 instances: seg loss " << fmt("%.4f", r.seg0) << " -> " << fmt("%.4f", r.seg_end) << " ("
    << fmt("%.0f%%", 100 * (1 - r.seg_end / r.seg0)) << " down), cls loss " << fmt("%.4f", r.cls0) << " -> "
    << fmt("%.4f", r.cls_end) << " (" << fmt("%.0f%%", 100 * (1 - r.cls_end / r.cls0)) << " down), "
    << fmt("%.0f", r.seconds) << " s";
  return {seg_ok && r.seg_epochs <= 200 && seg_drop && cls_drop && r.seconds < 1200.0, s.str()};
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_history(const std::vector<train::EpochRecord>& a, const std::vector<train::EpochRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto &x = a[i], &y = b[i];
    if (!same_bits(x.train_loss, y.train_loss) || !same_bits(x.val_loss, y.val_loss) ||
        !same_bits(x.seg_loss, y.seg_loss) || !same_bits(x.cls_loss, y.cls_loss) || !same_bits(x.miou, y.miou) ||
        !same_bits(x.train_accuracy, y.train_accuracy) || !same_bits(x.lr, y.lr))
      return false;
  }
  return true;
}

Outcome criterion7(const OverfitRun& a, const OverfitRun& b) {
  const bool seg_ck = a.seg_checkpoint == b.seg_checkpoint, joint_ck = a.joint_checkpoint == b.joint_checkpoint;
  const bool seg_h = same_history(a.seg_history, b.seg_history), joint_h = same_history(a.joint_history, b.joint_history);
  std::ostringstream s;
  s << "seg checkpoint (" << a.seg_checkpoint.size() << " bytes) " << (seg_ck ? "identical" : "DIFFERS")
    << ", joint checkpoint (" << a.joint_checkpoint.size() << " bytes) " << (joint_ck ? "identical" : "DIFFERS")
    << ", loss histories " << (seg_h && joint_h ? "bit-identical" : "DIFFER");
  return {seg_ck && joint_ck && seg_h && joint_h, s.str()};
}

// ---- 5. end-to-end synthetic pipeline ----------------------------------------------

struct E2eSettings {
  std::size_t seg_epochs = 20, joint_epochs = 10;
};

Outcome criterion5(const fs::path& work, const E2eSettings& es) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(work);
  pipeline::RunConfig cfg;
  cfg.net = net_cfg(32, 2, BlockKind::esp, BlockKind::psp);
  cfg.epochs = es.seg_epochs;
  cfg.lr0 = 0.05;
  cfg.decay_every = 10;
  cfg.seed = 7;
  cfg.data_dir = work / "data";
  cfg.out_dir = work / "run";
  auto log = [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); };
  synth::generate_dataset(synth::SynthConfig{}, cfg.data_dir, 64, 32, cfg.seed);
  pipeline::TrainOptions to;
  to.momentum = 0.9;
  pipeline::train_seg_stage(cfg, to, log);
  auto jcfg = cfg;
  jcfg.epochs = es.joint_epochs;
  pipeline::train_joint_stage(jcfg, to, log);
  for (const char* split : {"train", "test"}) pipeline::infer_stage(cfg, split, log);
  const auto seg = pipeline::eval_masks(pipeline::infer_dir(cfg, "test"), cfg.data_dir / "test", 8);
  pipeline::MlpOptions mo;
  mo.lr = 1e-2;
  mo.momentum = 0.9;
  const auto tau = pipeline::select_tau_stage(cfg, mo, log);
  for (const char* split : {"train", "test"}) pipeline::features_stage(cfg, split, log);
  double acc[2];
  for (bool disc : {true, false}) {
    const auto ck = cfg.out_dir / (disc ? "mlp_disc.ckpt" : "mlp_plain.ckpt");
    pipeline::train_mlp_stage(cfg, pipeline::features_file(cfg, "train", disc), ck, mo, log);
    acc[disc ? 0 : 1] = pipeline::diagnose_stage(ck, pipeline::features_file(cfg, "test", disc),
                                                 cfg.out_dir / (disc ? "predictions_disc.csv" : "predictions_plain.csv"))
                            .accuracy;
  }
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << "test mIOU " << fmt("%.4f", seg.miou) << ", tau " << fmt("%.2f", tau.tau) << ", diagnostic accuracy "
    << fmt("%.4f", acc[0]) << " (discriminative) vs " << fmt("%.4f", acc[1]) << " (plain) on 32 test ROIs, "
    << fmt("%.0f", secs) << " s";
  return {acc[0] >= 0.90 && acc[0] >= acc[1] && secs < 7200.0, s.str()};
}

// ---- 6. oracle suites --------------------------------------------------------------

// Origins by walking the axis one stride at a time.
std::vector<std::size_t> origins_oracle(std::size_t len, std::size_t size, std::size_t overlap) {
  std::vector<std::size_t> o;
  std::size_t x = 0;
  while (true) {
    o.push_back(x);
    if (x + size >= len) break;
    x = std::min(x + (size - overlap), len - size);
  }
  return o;
}

io::LabelMask stitch_oracle(const std::vector<std::vector<float>>& probs, const tiling::InstanceGrid& g,
                            std::size_t k) {
  io::LabelMask out(g.roi_width, g.roi_height);
  const std::size_t s = g.size;
  for (std::size_t y = 0; y < g.roi_height; ++y)
    for (std::size_t x = 0; x < g.roi_width; ++x) {
      std::vector<double> avg(k, 0.0);
      int n = 0;
      for (std::size_t i = 0; i < g.count(); ++i) {
        if (!g.covers(i, x, y)) continue;
        ++n;
        for (std::size_t c = 0; c < k; ++c)
          avg[c] += probs[i][(c * s + (y - g.origins[i].y)) * s + (x - g.origins[i].x)];
      }
      std::size_t best = 0;
      for (std::size_t c = 0; c < k; ++c) avg[c] /= n;
      for (std::size_t c = 1; c < k; ++c)
        if (avg[c] > avg[best]) best = c;
      out.at(x, y) = static_cast<std::uint8_t>(best);
    }
  return out;
}

double miou_oracle(const std::vector<std::uint8_t>& p, const std::vector<std::uint8_t>& g, std::size_t k) {
  double sum = 0;
  int present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::set<std::size_t> in_p, in_g, uni, inter;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] == c) in_p.insert(i);
      if (g[i] == c) in_g.insert(i);
    }
    std::set_union(in_p.begin(), in_p.end(), in_g.begin(), in_g.end(), std::inserter(uni, uni.end()));
    std::set_intersection(in_p.begin(), in_p.end(), in_g.begin(), in_g.end(), std::inserter(inter, inter.end()));
    if (uni.empty()) continue;
    sum += double(inter.size()) / double(uni.size());
    ++present;
  }
  return sum / present;
}

// Histograms by enumerating every pixel pair at Manhattan distance 1.
void hist_oracle(const io::LabelMask& m, std::array<double, 8>& freq, std::array<double, 36>& cooc) {
  double table[8][8] = {};
  double counts[8] = {}, valid = 0, pairs = 0;
  const long W = long(m.width), H = long(m.height);
  for (long p = 0; p < W * H; ++p) {
    if (m.labels[p] != io::LabelMask::kInvalid) {
      counts[m.labels[p]] += 1;
      valid += 1;
    }
    for (long q = p + 1; q < W * H; ++q) {
      if (std::abs(p % W - q % W) + std::abs(p / W - q / W) != 1) continue;
      const auto a = m.labels[p], b = m.labels[q];
      if (a == io::LabelMask::kInvalid || b == io::LabelMask::kInvalid) continue;
      table[std::min(a, b)][std::max(a, b)] += 1;
      pairs += 1;
    }
  }
  for (int c = 0; c < 8; ++c) freq[c] = counts[c] / valid;
  std::size_t idx = 0;
  for (int a = 0; a < 8; ++a)
    for (int b = a; b < 8; ++b) cooc[idx++] = pairs ? table[a][b] / pairs : 0.0;
}

Outcome criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::size_t bad_tiling = 0, bad_stitch = 0, bad_miou = 0, bad_hist = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t size = 1 + rng.below(48), overlap = rng.below(size), len = size + rng.below(200);
    bad_tiling += tiling::axis_origins(len, size, overlap) != origins_oracle(len, size, overlap);
  }
  for (int t = 0; t < 1000; ++t) {
    const std::size_t size = 2 + rng.below(5), overlap = rng.below(size);
    const std::size_t w = size + rng.below(8), h = size + rng.below(8), k = 2 + rng.below(4);
    const auto g = tiling::make_grid(w, h, size, overlap);
    std::vector<std::vector<float>> probs;
    for (std::size_t i = 0; i < g.count(); ++i) {
      std::vector<float> p(k * size * size);
      for (std::size_t px = 0; px < size * size; ++px) {
        double sum = 0;
        for (std::size_t c = 0; c < k; ++c) {
          const double v = t % 2 ? rng.uniform() : double(rng.below(3));  // coarse values force ties
          p[c * size * size + px] = static_cast<float>(v);
          sum += v;
        }
        for (std::size_t c = 0; c < k; ++c)
          p[c * size * size + px] = sum > 0 ? p[c * size * size + px] / float(sum) : 1.0f / float(k);
      }
      probs.push_back(std::move(p));
    }
    bad_stitch += !(tiling::stitch_seg(probs, g, k) == stitch_oracle(probs, g, k));
  }
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 2 + rng.below(7), n = 1 + rng.below(64);
    std::vector<std::uint8_t> p(n), g(n);
    for (auto& v : p) v = static_cast<std::uint8_t>(rng.below(k));
    for (auto& v : g) v = static_cast<std::uint8_t>(rng.below(k));
    bad_miou += train::miou(p, g, k) != miou_oracle(p, g, k);
  }
  for (int t = 0; t < 1000; ++t) {
    io::LabelMask m(1 + rng.below(24), 1 + rng.below(24));
    const bool holes = t % 3 == 0;
    for (auto& v : m.labels) v = holes && rng.bernoulli(0.3) ? io::LabelMask::kInvalid : std::uint8_t(rng.below(8));
    m.labels[rng.below(m.labels.size())] = static_cast<std::uint8_t>(rng.below(8));  // at least one valid pixel
    std::array<double, 8> f;
    std::array<double, 36> c;
    hist_oracle(m, f, c);
    bad_hist += diagnosis::frequency_hist(m) != f || diagnosis::cooccurrence_hist(m).bins != c;
  }
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << "mismatches out of 1000 each: tiling " << bad_tiling << ", stitching " << bad_stitch << ", mIOU " << bad_miou
    << ", histograms " << bad_hist << ", " << fmt("%.1f", secs) << " s";
  return {bad_tiling + bad_stitch + bad_miou + bad_hist == 0 && secs < 120.0, s.str()};
}

// ---- 8. monotonicity ----------------------------------------------------------------

Outcome criterion8() {
  std::vector<std::string> problems;
  std::size_t pairs = 0;
  for (BlockKind enc : {BlockKind::esp, BlockKind::rcb})
    for (BlockKind dec : {BlockKind::esp, BlockKind::rcb, BlockKind::psp})
      for (Sharing sh : {Sharing::none, Sharing::add, Sharing::concat}) {
        const std::string tag = std::string(nn::block_kind_name(enc)) + "-" + std::string(nn::block_kind_name(dec)) +
                                "/" + std::string(model::sharing_name(sh));
        std::size_t prev = 0;
        for (std::size_t w : {16, 32, 64, 128}) {
          const auto n = joint_count(net_cfg(w, 2, enc, dec, sh));
          if (n <= prev) problems.push_back(tag + " not increasing at w=" + std::to_string(w));
          prev = n;
          ++pairs;
        }
        prev = 0;
        for (std::size_t d = 1; d <= 5; ++d) {
          const auto n = joint_count(net_cfg(32, d, enc, dec, sh));
          if (n <= prev) problems.push_back(tag + " not increasing at d=" + std::to_string(d));
          prev = n;
          ++pairs;
        }
      }
  // Discriminative set inclusion as tau rises.
  Rng rng(8);
  std::size_t grids = 0;
  for (int t = 0; t < 200; ++t) {
    const auto g = tiling::make_grid(384 + rng.below(800), 384 + rng.below(800));
    std::vector<double> conf(g.count());
    for (auto& c : conf) c = 0.25 + 0.75 * rng.uniform();
    std::vector<std::uint8_t> prev_bin;
    std::vector<bool> prev_disc;
    for (double tau : tiling::tau_grid()) {
      const auto m = tiling::make_discriminative_map(g, conf, tau);
      if (!prev_disc.empty()) {
        for (std::size_t i = 0; i < conf.size(); ++i)
          if (m.discriminative[i] && !prev_disc[i]) problems.push_back("instance set grew at tau " + fmt("%.2f", tau));
        for (std::size_t p = 0; p < m.binary.size(); ++p)
          if (m.binary[p] > prev_bin[p]) {
            problems.push_back("pixel set grew at tau " + fmt("%.2f", tau));
            break;
          }
      }
      prev_disc = m.discriminative;
      prev_bin = m.binary;
    }
    ++grids;
  }
  // Learning-rate schedule.
  train::TrainConfig tc;
  for (std::size_t e = 1; e < 120; ++e) {
    const double a = train::lr_at(e - 1, tc), b = train::lr_at(e, tc);
    const bool boundary = e == 30 || e == 60 || e == 90;
    if (boundary ? b != a / 2 : b != a) problems.push_back("lr schedule at epoch " + std::to_string(e));
  }
  if (train::lr_at(0, tc) != 1e-4) problems.push_back("lr at epoch 0");
  std::ostringstream s;
  s << pairs << " parameter counts over w and d for 18 (encoder, decoder, sharing) settings, " << grids
    << " random grids over the tau sweep, lr halving at 30/60/90";
  if (!problems.empty()) {
    s << "; " << problems.size() << " violation(s), first: " << problems.front();
  }
  return {problems.empty(), s.str()};
}

const char* kNames[] = {"",
                        "parameter-count fidelity",
                        "gradient suite",
                        "shape/topology suite",
                        "overfit check",
                        "end-to-end synthetic pipeline",
                        "oracle suites",
                        "determinism",
                        "monotonicity properties"};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> which;
  std::string work = (fs::temp_directory_path() / "ynet_acceptance").string();
  E2eSettings es;
  std::size_t nthreads = 0;
  app.add_option("--criterion", which, "criterion number(s) 1-8 (default: all)")->check(CLI::Range(1, 8));
  app.add_option("--work-dir", work, "scratch directory for the end-to-end pipeline");
  app.add_option("--seg-epochs", es.seg_epochs, "segmentation epochs of the end-to-end run");
  app.add_option("--joint-epochs", es.joint_epochs, "joint epochs of the end-to-end run");
  app.add_option("--threads", nthreads, "cap on worker threads (0 = all cores)");
  CLI11_PARSE(app, argc, argv);
  pipeline::set_threads(nthreads);
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};
  std::sort(which.begin(), which.end());
  which.erase(std::unique(which.begin(), which.end()), which.end());

  std::optional<OverfitRun> first;
  auto overfit = [&]() -> const OverfitRun& {
    if (!first) first = overfit_run();
    return *first;
  };
  bool all = true;
  for (int c : which) {
    Outcome o;
    try {
      switch (c) {
        case 1: o = criterion1(); break;
        case 2: o = criterion2(); break;
        case 3: o = criterion3(); break;
        case 4: o = criterion4(overfit()); break;
        case 5: o = criterion5(fs::path(work) / "e2e", es); break;
        case 6: o = criterion6(); break;
        case 7: {
          const OverfitRun& a = overfit();
          o = criterion7(a, overfit_run());
          break;
        }
        case 8: o = criterion8(); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("criterion %d (%s): %s - %s\n", c, kNames[c], o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
