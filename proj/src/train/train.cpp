#include "ynet/train/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ynet/optim.hpp"
#include "ynet/train/metrics.hpp"

namespace ynet::train {

void TrainConfig::validate() const {
  if (!(lr0 >= 0)) throw ConfigError("lr0 must be >= 0");
  if (!(decay_factor >= 1)) throw ConfigError("decay_factor must be >= 1");
  if (decay_every == 0) throw ConfigError("decay_every must be >= 1");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (check_every == 0) throw ConfigError("check_every must be >= 1");
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 / std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

AugmentDraw draw_augment(std::size_t size, Rng& rng) {
  AugmentDraw d;
  d.hflip = rng.bernoulli(0.5);
  d.vflip = rng.bernoulli(0.5);
  const double scale = rng.uniform(0.8, 1.0);
  d.crop = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * double(size))), 1, size);
  d.x0 = rng.below(size - d.crop + 1);
  d.y0 = rng.below(size - d.crop + 1);
  return d;
}

void apply_augment(std::vector<float>& image, std::vector<std::uint8_t>& mask, std::size_t S, const AugmentDraw& d) {
  if (image.size() != 3 * S * S || mask.size() != S * S) throw DimensionError("augment: buffer sizes do not match");
  if (d.crop == 0 || d.x0 + d.crop > S || d.y0 + d.crop > S) throw ConfigError("augment: crop outside the instance");
  if (d.crop != S) {
    const std::size_t c = d.crop;
    std::vector<float> cropped(3 * c * c);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < c; ++y)
        std::copy_n(image.begin() + static_cast<std::ptrdiff_t>((ch * S + d.y0 + y) * S + d.x0), c,
                    cropped.begin() + static_cast<std::ptrdiff_t>((ch * c + y) * c));
    {
      NoGradGuard ng;
      auto t = ops::resize_bilinear(Tensorf::from_data({1, 3, c, c}, std::move(cropped)), S, S);
      image.assign(t.data().begin(), t.data().end());
    }
    // Nearest neighbour with the same half-pixel mapping.
    std::vector<std::uint8_t> m(S * S);
    std::vector<std::size_t> src(S);
    for (std::size_t i = 0; i < S; ++i) src[i] = std::min(c - 1, (2 * i + 1) * c / (2 * S));
    for (std::size_t y = 0; y < S; ++y)
      for (std::size_t x = 0; x < S; ++x) m[y * S + x] = mask[(d.y0 + src[y]) * S + d.x0 + src[x]];
    mask = std::move(m);
  }
  if (d.hflip) {
    for (std::size_t r = 0; r < 3 * S; ++r) std::reverse(image.begin() + r * S, image.begin() + (r + 1) * S);
    for (std::size_t y = 0; y < S; ++y) std::reverse(mask.begin() + y * S, mask.begin() + (y + 1) * S);
  }
  if (d.vflip) {
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t y = 0; y < S / 2; ++y)
        std::swap_ranges(image.begin() + (ch * S + y) * S, image.begin() + (ch * S + y + 1) * S,
                         image.begin() + (ch * S + S - 1 - y) * S);
    for (std::size_t y = 0; y < S / 2; ++y)
      std::swap_ranges(mask.begin() + y * S, mask.begin() + (y + 1) * S, mask.begin() + (S - 1 - y) * S);
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                           std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5b17));
  rng.shuffle(idx.begin(), idx.end());
  auto n_val = static_cast<std::size_t>(std::lround(val_fraction * double(n)));
  if (n_val >= n) n_val = n - 1;
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

namespace {

struct Batch {
  Tensorf x;
  std::vector<std::int32_t> seg, cls;
};

std::vector<float> to_float(const Sample& s) {
  std::vector<float> v(s.rgb.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(s.rgb[i]) / 255.0f;
  return v;
}

// aug_seed == nullopt: no augmentation.
Batch make_batch(const std::vector<Sample>& data, std::span<const std::size_t> which, bool joint,
                 const std::function<std::optional<std::uint64_t>(std::size_t)>& aug_seed) {
  const std::size_t S = data[which[0]].size;
  Batch b;
  std::vector<float> x;
  x.reserve(which.size() * 3 * S * S);
  for (std::size_t i : which) {
    const Sample& s = data[i];
    if (s.size != S) throw DataError("samples in a batch must share one instance size");
    std::vector<float> img = to_float(s);
    std::vector<std::uint8_t> m = s.mask;
    if (auto seed = aug_seed(i)) {
      Rng r(*seed);
      apply_augment(img, m, S, draw_augment(S, r));
    }
    x.insert(x.end(), img.begin(), img.end());
    b.seg.insert(b.seg.end(), m.begin(), m.end());
    if (joint) {
      if (s.label < 0) throw DataError("joint training needs a diagnosis label on every instance");
      b.cls.push_back(s.label);
    }
  }
  b.x = Tensorf::from_data({which.size(), 3, S, S}, std::move(x));
  return b;
}

std::vector<nn::NamedTensor<float>> snapshot(const nn::Module<float>& m) {
  auto s = m.named_state();
  for (auto& e : s) e.tensor = e.tensor.clone();
  return s;
}

struct EvalResult {
  double loss = 0;
  ConfusionMatrix cm{8};
};

EvalResult evaluate(model::YNet<float>& net, const std::vector<Sample>& data, std::span<const std::size_t> which,
                    bool joint, std::size_t batch_size, const ops::CrossEntropyOptions& ce) {
  EvalResult r{0.0, ConfusionMatrix(net.config().tissue_classes)};
  net.set_training(false);
  NoGradGuard ng;
  const std::size_t K = net.config().tissue_classes;
  for (std::size_t start = 0; start < which.size(); start += batch_size) {
    const auto part = which.subspan(start, std::min(batch_size, which.size() - start));
    Batch b = make_batch(data, part, joint, [](std::size_t) { return std::nullopt; });
    Tensorf seg;
    double loss;
    if (joint) {
      auto [s, c] = net.forward_joint(b.x);
      loss = model::multi_task_loss(s, b.seg, c, b.cls, ce).total.item();
      seg = s;
    } else {
      seg = net.forward_seg(b.x);
      loss = ops::softmax_cross_entropy(seg, std::span<const std::int32_t>(b.seg), ce).item();
    }
    r.loss += loss * double(part.size());
    const std::size_t HW = seg.dim(2) * seg.dim(3);
    const auto d = seg.data();
    for (std::size_t n = 0; n < part.size(); ++n)
      for (std::size_t p = 0; p < HW; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
          if (d[(n * K + k) * HW + p] > d[(n * K + best) * HW + p]) best = k;
        r.cm.add(static_cast<int>(best), b.seg[n * HW + p]);
      }
  }
  r.loss /= double(which.size());
  net.set_training(true);
  return r;
}

TrainResult run(model::YNet<float>& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
                const TrainConfig& cfg, const EpochCallback& on_epoch, bool joint) {
  cfg.validate();
  if (train.empty()) throw DataError("training set is empty");
  if (joint && !net.has_head()) throw StateError("joint training needs the classification head attached");
  ops::CrossEntropyOptions ce;
  ce.class_weights = cfg.class_weights;

  Sgd<float> opt(net.parameters(), cfg.lr0, cfg.momentum);
  TrainResult res;
  std::vector<std::size_t> order(train.size()), val_idx(val.size()), all_train(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) all_train[i] = i;
  for (std::size_t i = 0; i < val.size(); ++i) val_idx[i] = i;

  net.set_training(true);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at(epoch, cfg);
    opt.set_lr(rec.lr);
    order = all_train;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x0bde5, epoch));
    shuffle_rng.shuffle(order.begin(), order.end());

    double total = 0, seg_sum = 0, cls_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto part = std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
      Batch b = make_batch(train, part, joint, [&](std::size_t i) -> std::optional<std::uint64_t> {
        if (!cfg.augment) return std::nullopt;
        return derive_seed(cfg.seed, i, epoch);
      });
      Tensorf loss;
      if (joint) {
        auto [s, c] = net.forward_joint(b.x);
        auto l = model::multi_task_loss(s, b.seg, c, b.cls, ce);
        seg_sum += l.seg.item() * double(part.size());
        cls_sum += l.cls.item() * double(part.size());
        loss = l.total;
      } else {
        loss = ops::softmax_cross_entropy(net.forward_seg(b.x), std::span<const std::int32_t>(b.seg), ce);
      }
      total += loss.item() * double(part.size());
      loss.backward();
      opt.step();
    }
    const double n = double(train.size());
    rec.train_loss = total / n;
    if (joint) {
      rec.seg_loss = seg_sum / n;
      rec.cls_loss = cls_sum / n;
    }

    if (!val.empty()) {
      const auto ev = evaluate(net, val, val_idx, joint, cfg.batch_size, ce);
      rec.val_loss = ev.loss;
      rec.miou = ev.cm.miou();
    }
    const bool last = epoch + 1 == cfg.epochs;
    if (cfg.stop_at_train_accuracy > 0 && ((epoch + 1) % cfg.check_every == 0 || last)) {
      const auto ev = evaluate(net, train, all_train, joint, cfg.batch_size, ce);
      rec.train_accuracy = ev.cm.accuracy();
      if (val.empty()) rec.miou = ev.cm.miou();
    }

    const double score = val.empty() ? rec.train_loss : rec.val_loss;
    if (score < res.best_loss) {
      res.best_loss = score;
      res.best_epoch = epoch;
      res.best_state = snapshot(net);
    }
    res.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (cfg.stop_at_train_accuracy > 0 && rec.train_accuracy >= cfg.stop_at_train_accuracy) {
      res.stopped_early = !last;
      break;
    }
  }
  return res;
}

}  // namespace

TrainResult train_segmentation(model::YNet<float>& net, const std::vector<Sample>& train,
                               const std::vector<Sample>& val, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return run(net, train, val, cfg, on_epoch, false);
}

TrainResult train_joint(model::YNet<float>& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const TrainConfig& cfg, const EpochCallback& on_epoch) {
  return run(net, train, val, cfg, on_epoch, true);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& h, bool joint) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "epoch,lr,train_loss,val_loss" << (joint ? ",seg_loss,cls_loss" : "") << ",miou\n";
  auto num = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  for (const auto& r : h) {
    f << r.epoch << ',' << num(r.lr) << ',' << num(r.train_loss) << ',' << num(r.val_loss);
    if (joint) f << ',' << num(r.seg_loss) << ',' << num(r.cls_loss);
    f << ',' << num(r.miou) << '\n';
  }
  if (!f) throw DataError("write failed for " + path.string());
}

std::vector<std::vector<std::uint8_t>> predict_masks(model::YNet<float>& net, const std::vector<Sample>& samples,
                                                     std::size_t batch_size) {
  std::vector<std::vector<std::uint8_t>> out;
  const bool was_training = net.training();
  net.set_training(false);
  NoGradGuard ng;
  const std::size_t K = net.config().tissue_classes;
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  for (std::size_t start = 0; start < all.size(); start += batch_size) {
    const auto part = std::span<const std::size_t>(all).subspan(start, std::min(batch_size, all.size() - start));
    Batch b = make_batch(samples, part, false, [](std::size_t) { return std::nullopt; });
    const Tensorf seg = net.forward_seg(b.x);
    const std::size_t HW = seg.dim(2) * seg.dim(3);
    const auto d = seg.data();
    for (std::size_t n = 0; n < part.size(); ++n) {
      std::vector<std::uint8_t> m(HW);
      for (std::size_t p = 0; p < HW; ++p) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
          if (d[(n * K + k) * HW + p] > d[(n * K + best) * HW + p]) best = k;
        m[p] = static_cast<std::uint8_t>(best);
      }
      out.push_back(std::move(m));
    }
  }
  net.set_training(was_training);
  return out;
}

double pixel_accuracy(model::YNet<float>& net, const std::vector<Sample>& samples, std::size_t batch_size) {
  const auto pred = predict_masks(net, samples, batch_size);
  ConfusionMatrix cm(net.config().tissue_classes);
  for (std::size_t i = 0; i < samples.size(); ++i) cm.add(pred[i], samples[i].mask);
  return cm.accuracy();
}

void load_state(nn::Module<float>& m, const std::vector<nn::NamedTensor<float>>& state) {
  auto dst = m.named_state();
  if (dst.size() != state.size()) throw DataError("state size mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != state[i].name || dst[i].tensor.shape() != state[i].tensor.shape()) {
      throw DataError("state entry mismatch at " + dst[i].name);
    }
    std::copy(state[i].tensor.data().begin(), state[i].tensor.data().end(), dst[i].tensor.data().begin());
  }
}

}  // namespace ynet::train
