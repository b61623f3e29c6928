#include "ynet/pipeline/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "ynet/error.hpp"
#include "ynet/model/checkpoint.hpp"
#include "ynet/ops.hpp"
#include "ynet/train/metrics.hpp"

namespace ynet::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

std::size_t get_count(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) throw ConfigError(std::string("config: '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

double get_real(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
  return v.get<double>();
}

fs::path get_path(const json& j, const char* key, const fs::path& fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_string()) throw ConfigError(std::string("config: '") + key + "' must be a string");
  return fs::path(v.get<std::string>());
}

train::TrainConfig train_config(const RunConfig& cfg, const TrainOptions& opt) {
  train::TrainConfig t;
  t.epochs = cfg.epochs;
  t.lr0 = cfg.lr0;
  t.decay_every = cfg.decay_every;
  t.decay_factor = cfg.decay_factor;
  t.batch_size = cfg.batch_size;
  t.val_fraction = cfg.val_fraction;
  t.seed = cfg.seed;
  t.momentum = opt.momentum;
  t.augment = opt.augment;
  t.stop_at_train_accuracy = opt.stop_at_train_accuracy;
  return t;
}

ordered_json stage_meta(const RunConfig& cfg, const std::string& stage, const ordered_json& options) {
  ordered_json j = cfg.to_json();
  j["stage"] = stage;
  j["options"] = options;
  return j;
}

ordered_json options_json(const TrainOptions& o) {
  ordered_json j;
  j["momentum"] = o.momentum;
  j["augment"] = o.augment;
  j["stop_at_train_accuracy"] = o.stop_at_train_accuracy;
  return j;
}

std::vector<synth::RoiRecord> split_records(const RunConfig& cfg, const std::string& split) {
  std::vector<synth::RoiRecord> out;
  for (auto& r : synth::read_manifest(cfg.data_dir))
    if (r.split == split) out.push_back(std::move(r));
  if (out.empty()) throw DataError("no ROIs in split '" + split + "' of " + (cfg.data_dir / "manifest.csv").string());
  return out;
}

// ROI-level train/validation split of the training ROIs, shared by the
// segmentation stages and tau selection so validation ROIs stay unseen.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> roi_split(const RunConfig& cfg, std::size_t n) {
  return train::split_indices(n, cfg.val_fraction, cfg.seed);
}

std::vector<train::Sample> instances_of(const RunConfig& cfg, const std::vector<synth::RoiRecord>& recs,
                                        std::span<const std::size_t> which) {
  std::vector<std::vector<train::Sample>> per(which.size());
  parallel_for(which.size(), [&](std::size_t k) {
    const auto roi = synth::load_roi(cfg.data_dir, recs[which[k]]);
    const auto grid = tiling::make_grid(roi.image.width, roi.image.height, cfg.instance_size, cfg.overlap);
    per[k] = roi_instances(roi.image, roi.mask, roi.record.label, grid);
  });
  std::vector<train::Sample> out;
  for (auto& v : per)
    for (auto& s : v) out.push_back(std::move(s));
  return out;
}

std::string epoch_line(const std::string& stage, const train::EpochRecord& e, bool joint) {
  std::string s = stage + " epoch " + std::to_string(e.epoch) + " lr " + fmt(e.lr) + " train_loss " + fmt(e.train_loss);
  if (joint) s += " (seg " + fmt(e.seg_loss) + " cls " + fmt(e.cls_loss) + ")";
  if (!std::isnan(e.val_loss)) s += " val_loss " + fmt(e.val_loss);
  if (!std::isnan(e.miou)) s += " miou " + fmt(e.miou);
  if (!std::isnan(e.train_accuracy)) s += " train_acc " + fmt(e.train_accuracy);
  return s;
}

std::array<double, diagnosis::kFeatureDim> to_array(const diagnosis::FeatureRow& r) { return r.values; }

ordered_json confusion_json(const std::vector<std::vector<std::size_t>>& c) {
  ordered_json j = ordered_json::array();
  for (const auto& row : c) j.push_back(row);
  return j;
}

std::atomic<std::size_t> g_threads{0};

}  // namespace

// ---- config ----------------------------------------------------------------

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k{"w",           "d",           "encoder_block", "decoder_block",
                                          "feature_sharing", "tissue_classes", "diagnostic_classes",
                                          "instance_size", "overlap",    "epochs",        "lr0",
                                          "decay_every", "decay_factor", "batch_size",   "val_fraction",
                                          "seed",        "tau",         "data_dir",      "out_dir"};
  return k;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (std::find(keys().begin(), keys().end(), k) == keys().end()) throw ConfigError("config: unknown key '" + k + "'");
  RunConfig c;
  c.net = model::NetworkConfig::from_json(j);
  c.instance_size = get_count(j, "instance_size", c.instance_size);
  c.overlap = get_count(j, "overlap", c.overlap);
  c.epochs = get_count(j, "epochs", c.epochs);
  c.lr0 = get_real(j, "lr0", c.lr0);
  c.decay_every = get_count(j, "decay_every", c.decay_every);
  c.decay_factor = get_real(j, "decay_factor", c.decay_factor);
  c.batch_size = get_count(j, "batch_size", c.batch_size);
  c.val_fraction = get_real(j, "val_fraction", c.val_fraction);
  c.seed = get_count(j, "seed", c.seed);
  if (j.contains("tau")) {
    const auto& t = j.at("tau");
    if (t.is_string() && t.get<std::string>() == "auto") {
      c.tau.reset();
    } else if (t.is_number()) {
      c.tau = t.get<double>();
    } else {
      throw ConfigError("config: 'tau' must be a number or \"auto\"");
    }
  }
  c.data_dir = get_path(j, "data_dir", c.data_dir);
  c.out_dir = get_path(j, "out_dir", c.out_dir);
  c.validate();
  return c;
}

ordered_json RunConfig::to_json() const {
  ordered_json j = net.to_json();
  j["instance_size"] = instance_size;
  j["overlap"] = overlap;
  j["epochs"] = epochs;
  j["lr0"] = lr0;
  j["decay_every"] = decay_every;
  j["decay_factor"] = decay_factor;
  j["batch_size"] = batch_size;
  j["val_fraction"] = val_fraction;
  j["seed"] = seed;
  if (tau)
    j["tau"] = *tau;
  else
    j["tau"] = "auto";
  j["data_dir"] = data_dir.string();
  j["out_dir"] = out_dir.string();
  return j;
}

void RunConfig::validate() const {
  net.validate();
  if (instance_size == 0 || instance_size % model::YNet<float>::kJointMultiple != 0)
    throw ConfigError("config: instance_size must be a positive multiple of 32, got " + std::to_string(instance_size));
  if (overlap >= instance_size)
    throw ConfigError("config: overlap " + std::to_string(overlap) + " must be below instance_size");
  if (tau && !(*tau >= 0.0 && *tau < 1.0)) throw ConfigError("config: tau must lie in [0, 1) or be \"auto\"");
  train_config(*this, {}).validate();
}

// ---- threads ---------------------------------------------------------------

void set_threads(std::size_t n) { g_threads = n; }

std::size_t threads() {
  const std::size_t n = g_threads;
  if (n) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min(threads(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

// ---- data ------------------------------------------------------------------

std::vector<train::Sample> roi_instances(const io::RgbImage& image, const io::LabelMask& mask, int label,
                                         const tiling::InstanceGrid& grid) {
  if (mask.width != image.width || mask.height != image.height) throw DimensionError("ROI image and mask sizes differ");
  const std::size_t S = grid.size;
  std::vector<train::Sample> out;
  for (const auto& o : grid.origins) {
    train::Sample s;
    s.size = S;
    s.label = label;
    s.rgb.resize(3 * S * S);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) s.rgb[(c * S + y) * S + x] = image.at(o.x + x, o.y + y, c);
    s.mask = tiling::extract_mask(mask, o, S).labels;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<train::Sample> split_instances(const RunConfig& cfg, const std::string& split) {
  const auto recs = split_records(cfg, split);
  std::vector<std::size_t> all(recs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return instances_of(cfg, recs, all);
}

// ---- training stages -------------------------------------------------------

StageFiles seg_files(const RunConfig& cfg) { return {cfg.out_dir / "seg.ckpt", cfg.out_dir / "seg_history.csv"}; }
StageFiles joint_files(const RunConfig& cfg) {
  return {cfg.out_dir / "joint.ckpt", cfg.out_dir / "joint_history.csv"};
}

train::TrainResult train_seg_stage(const RunConfig& cfg, const TrainOptions& opt, const Log& log) {
  cfg.validate();
  const auto recs = split_records(cfg, "train");
  const auto [tr, va] = roi_split(cfg, recs.size());
  const auto train_set = instances_of(cfg, recs, tr);
  const auto val_set = instances_of(cfg, recs, va);
  say(log, "train-seg: " + std::to_string(train_set.size()) + " training / " + std::to_string(val_set.size()) +
               " validation instances from " + std::to_string(recs.size()) + " ROIs");
  Rng rng(derive_seed(cfg.seed, 0x5e6));
  model::YNet<float> net(cfg.net, rng);
  auto r = train::train_segmentation(net, train_set, val_set, train_config(cfg, opt),
                                     [&](const train::EpochRecord& e) { say(log, epoch_line("seg", e, false)); });
  train::load_state(net, r.best_state);
  fs::create_directories(cfg.out_dir);
  const auto files = seg_files(cfg);
  model::save_checkpoint(files.checkpoint, net, stage_meta(cfg, "seg", options_json(opt)));
  train::write_history_csv(files.history, r.history, false);
  say(log, "train-seg: best epoch " + std::to_string(r.best_epoch) + " loss " + fmt(r.best_loss) + " -> " +
               files.checkpoint.string());
  return r;
}

train::TrainResult train_joint_stage(const RunConfig& cfg, const TrainOptions& opt, const Log& log) {
  cfg.validate();
  auto net = load_network(seg_files(cfg).checkpoint);
  if (net->config().to_json() != cfg.net.to_json())
    throw ConfigError("train-joint: segmentation checkpoint was built with " + net->config().to_json().dump() +
                      ", config asks for " + cfg.net.to_json().dump());
  if (net->has_head()) throw StateError("train-joint: " + seg_files(cfg).checkpoint.string() + " already has a head");
  Rng rng(derive_seed(cfg.seed, 0x4ead));
  net->attach_classification_head(rng);
  const auto recs = split_records(cfg, "train");
  const auto [tr, va] = roi_split(cfg, recs.size());
  const auto train_set = instances_of(cfg, recs, tr);
  const auto val_set = instances_of(cfg, recs, va);
  say(log, "train-joint: " + std::to_string(train_set.size()) + " training / " + std::to_string(val_set.size()) +
               " validation instances");
  auto r = train::train_joint(*net, train_set, val_set, train_config(cfg, opt),
                              [&](const train::EpochRecord& e) { say(log, epoch_line("joint", e, true)); });
  train::load_state(*net, r.best_state);
  const auto files = joint_files(cfg);
  model::save_checkpoint(files.checkpoint, *net, stage_meta(cfg, "joint", options_json(opt)));
  train::write_history_csv(files.history, r.history, true);
  say(log, "train-joint: best epoch " + std::to_string(r.best_epoch) + " loss " + fmt(r.best_loss) + " -> " +
               files.checkpoint.string());
  return r;
}

std::unique_ptr<model::YNet<float>> load_network(const fs::path& checkpoint) {
  const auto ck = model::load_checkpoint(checkpoint);
  const auto netcfg = model::NetworkConfig::from_json(ck.config);
  Rng rng(0);
  auto net = std::make_unique<model::YNet<float>>(netcfg, rng);
  if (ck.config.value("stage", std::string()) == "joint") net->attach_classification_head(rng);
  model::apply_checkpoint(*net, ck);
  net->set_training(false);
  return net;
}

// ---- inference -------------------------------------------------------------

RoiPrediction infer_roi(model::YNet<float>& net, const io::RgbImage& image, std::size_t instance_size,
                        std::size_t overlap) {
  if (net.training()) net.set_training(false);
  NoGradGuard ng;
  RoiPrediction out;
  out.grid = tiling::make_grid(image.width, image.height, instance_size, overlap);
  const std::size_t K = net.config().tissue_classes;
  const std::size_t S = instance_size;
  tiling::Stitcher st(out.grid, K);
  for (std::size_t i = 0; i < out.grid.count(); ++i) {
    const auto x = Tensorf::from_data({1, 3, S, S}, tiling::extract_patch(image, out.grid.origins[i], S));
    Tensorf seg;
    if (net.has_head()) {
      auto [s, cls] = net.forward_joint(x);
      seg = s;
      const std::vector<double> z(cls.data().begin(), cls.data().end());
      auto zbar = ops::softmax<double>(z);
      out.confidence.push_back(tiling::max_probability(zbar));
      out.zbar.push_back(std::move(zbar));
    } else {
      seg = net.forward_seg(x);
    }
    const auto probs = ops::softmax_channels(seg);
    st.add(i, probs);
  }
  out.mask = st.finish();
  return out;
}

fs::path infer_dir(const RunConfig& cfg, const std::string& split) { return cfg.out_dir / "infer" / split; }

void write_grid_csv(const fs::path& path, const std::vector<GridRow>& rows) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "roi_id,x,y,confidence,discriminative\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.confidence);
    f << r.roi_id << ',' << r.x << ',' << r.y << ',' << buf << ',';
    if (r.discriminative) f << (*r.discriminative ? 1 : 0);
    f << '\n';
  }
  if (!f) throw DataError("write failed: " + path.string());
}

std::vector<GridRow> read_grid_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path.string());
  std::string line;
  std::getline(f, line);
  if (line != "roi_id,x,y,confidence,discriminative") throw DataError(path.string() + ": unexpected header");
  std::vector<GridRow> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    if (line.back() == ',') cols.emplace_back();
    if (cols.size() != 5) throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
    GridRow r;
    try {
      r.roi_id = cols[0];
      r.x = std::stoul(cols[1]);
      r.y = std::stoul(cols[2]);
      r.confidence = std::stod(cols[3]);
      if (!cols[4].empty()) r.discriminative = cols[4] == "1";
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void infer_stage(const RunConfig& cfg, const std::string& split, const Log& log) {
  cfg.validate();
  const auto ck = joint_files(cfg).checkpoint;
  if (!fs::exists(ck)) throw StateError("infer: " + ck.string() + " not found; run train-joint first");
  auto net = load_network(ck);
  const auto recs = split_records(cfg, split);
  const auto dir = infer_dir(cfg, split);
  std::vector<std::vector<GridRow>> per(recs.size());
  parallel_for(recs.size(), [&](std::size_t k) {
    const auto roi = synth::load_roi(cfg.data_dir, recs[k]);
    const auto p = infer_roi(*net, roi.image, cfg.instance_size, cfg.overlap);
    fs::create_directories(dir / recs[k].roi_id);
    io::write_pgm(dir / recs[k].roi_id / "pred.pgm", p.mask);
    for (std::size_t i = 0; i < p.grid.count(); ++i) {
      GridRow r{recs[k].roi_id, p.grid.origins[i].x, p.grid.origins[i].y, p.confidence[i], {}};
      if (cfg.tau) r.discriminative = p.confidence[i] > *cfg.tau;
      per[k].push_back(r);
    }
  });
  std::vector<GridRow> rows;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    say(log, "infer: " + recs[k].roi_id + " " + std::to_string(per[k].size()) + " instance(s)");
    rows.insert(rows.end(), per[k].begin(), per[k].end());
  }
  write_grid_csv(dir / "grid.csv", rows);
  say(log, "infer: " + std::to_string(recs.size()) + " ROIs, " + std::to_string(rows.size()) + " instances -> " +
               dir.string());
}

std::vector<InferredRoi> load_inferred(const RunConfig& cfg, const std::string& split) {
  const auto recs = split_records(cfg, split);
  const auto dir = infer_dir(cfg, split);
  std::map<std::string, std::vector<GridRow>> by_roi;
  for (auto& r : read_grid_csv(dir / "grid.csv")) by_roi[r.roi_id].push_back(std::move(r));
  std::vector<InferredRoi> out;
  for (const auto& rec : recs) {
    InferredRoi r;
    r.record = rec;
    r.mask = io::read_pgm(dir / rec.roi_id / "pred.pgm");
    io::check_labels(r.mask, cfg.net.tissue_classes, dir / rec.roi_id / "pred.pgm");
    r.grid = tiling::make_grid(r.mask.width, r.mask.height, cfg.instance_size, cfg.overlap);
    const auto it = by_roi.find(rec.roi_id);
    if (it == by_roi.end() || it->second.size() != r.grid.count())
      throw DataError((dir / "grid.csv").string() + ": instance rows for " + rec.roi_id + " do not match its grid");
    for (std::size_t i = 0; i < r.grid.count(); ++i) {
      const auto& g = it->second[i];
      if (g.x != r.grid.origins[i].x || g.y != r.grid.origins[i].y)
        throw DataError((dir / "grid.csv").string() + ": origin mismatch for " + rec.roi_id);
      r.confidence.push_back(g.confidence);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---- features and tau --------------------------------------------------------

std::vector<diagnosis::FeatureRow> roi_features(const std::vector<InferredRoi>& rois, std::optional<double> tau) {
  std::vector<diagnosis::FeatureRow> rows(rois.size());
  parallel_for(rois.size(), [&](std::size_t k) {
    const auto& r = rois[k];
    io::LabelMask m = r.mask;
    if (tau) {
      const auto dmap = tiling::make_discriminative_map(r.grid, r.confidence, *tau);
      m = tiling::fuse_discriminative_mask(r.mask, dmap).mask;
    }
    rows[k].roi_id = r.record.roi_id;
    rows[k].values = diagnosis::extract_features(m).values;
    rows[k].label = r.record.label;
  });
  return rows;
}

namespace {

diagnosis::Mlp fit_mlp(const RunConfig& cfg, const std::vector<diagnosis::FeatureRow>& rows,
                       std::span<const std::size_t> which, const MlpOptions& o, diagnosis::MlpHistory* hist) {
  std::vector<std::array<double, diagnosis::kFeatureDim>> x;
  std::vector<int> y;
  for (std::size_t i : which) {
    x.push_back(to_array(rows[i]));
    y.push_back(rows[i].label);
  }
  Rng rng(derive_seed(cfg.seed, 0x3c9));
  diagnosis::Mlp mlp(rng);
  auto h = diagnosis::mlp_train(mlp, x, y, {o.epochs, o.lr, o.momentum});
  if (hist) *hist = std::move(h);
  return mlp;
}

}  // namespace

fs::path tau_file(const RunConfig& cfg) { return cfg.out_dir / "tau.json"; }

tiling::TauChoice select_tau_stage(const RunConfig& cfg, const MlpOptions& mlp, const Log& log) {
  cfg.validate();
  const auto rois = load_inferred(cfg, "train");
  const auto [tr, va] = roi_split(cfg, rois.size());
  auto choice = tiling::choose_tau(va.size(), [&](double tau) {
    const auto rows = roi_features(rois, tau);
    auto net = fit_mlp(cfg, rows, tr, mlp, nullptr);
    std::vector<int> pred, gt;
    for (std::size_t i : va) {
      pred.push_back(diagnosis::diagnose(net, rows[i].values).label);
      gt.push_back(rows[i].label);
    }
    const double acc = train::accuracy(pred, gt);
    say(log, "select-tau: tau " + fmt(tau, 2) + " validation accuracy " + fmt(acc));
    return acc;
  });
  ordered_json j;
  j["tau"] = choice.tau;
  j["accuracy"] = choice.accuracy;
  j["validation_rois"] = va.size();
  j["candidates"] = choice.candidates;
  j["accuracies"] = choice.accuracies;
  fs::create_directories(cfg.out_dir);
  write_json(tau_file(cfg), j);
  say(log, "select-tau: tau = " + fmt(choice.tau, 2) + " (validation accuracy " + fmt(choice.accuracy) + " on " +
               std::to_string(va.size()) + " ROIs)");
  return choice;
}

double resolve_tau(const RunConfig& cfg) {
  if (cfg.tau) return *cfg.tau;
  const auto path = tau_file(cfg);
  std::ifstream f(path);
  if (!f) throw StateError("tau is \"auto\" and " + path.string() + " does not exist; run select-tau first");
  try {
    return json::parse(f).at("tau").get<double>();
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

fs::path features_file(const RunConfig& cfg, const std::string& split, bool discriminative) {
  return cfg.out_dir / "features" / (split + (discriminative ? "_disc.csv" : "_plain.csv"));
}

void features_stage(const RunConfig& cfg, const std::string& split, const Log& log) {
  cfg.validate();
  const double tau = resolve_tau(cfg);
  const auto rois = load_inferred(cfg, split);
  fs::create_directories(cfg.out_dir / "features");
  diagnosis::write_features_csv(features_file(cfg, split, true), roi_features(rois, tau));
  diagnosis::write_features_csv(features_file(cfg, split, false), roi_features(rois, std::nullopt));
  std::vector<GridRow> grid;
  std::size_t disc = 0, fallback = 0;
  for (const auto& r : rois) {
    bool any = false;
    for (std::size_t i = 0; i < r.grid.count(); ++i) {
      const bool d = r.confidence[i] > tau;
      grid.push_back({r.record.roi_id, r.grid.origins[i].x, r.grid.origins[i].y, r.confidence[i], d});
      disc += d;
      any = any || d;
    }
    fallback += !any;
  }
  write_grid_csv(infer_dir(cfg, split) / "grid.csv", grid);
  say(log, "features: " + split + " " + std::to_string(rois.size()) + " ROIs, tau " + fmt(tau, 2) + ", " +
               std::to_string(disc) + "/" + std::to_string(grid.size()) + " discriminative instances, " +
               std::to_string(fallback) + " full-mask fallback(s)");
}

// ---- MLP ---------------------------------------------------------------------

diagnosis::MlpHistory train_mlp_stage(const RunConfig& cfg, const fs::path& features_csv, const fs::path& checkpoint,
                                      const MlpOptions& o, const Log& log) {
  const auto rows = diagnosis::read_features_csv(features_csv);
  if (rows.empty()) throw DataError(features_csv.string() + ": no feature rows");
  std::vector<std::size_t> all(rows.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  diagnosis::MlpHistory h;
  auto mlp = fit_mlp(cfg, rows, all, o, &h);
  ordered_json meta = cfg.to_json();
  meta["stage"] = "mlp";
  meta["options"] = {{"epochs", o.epochs}, {"lr", o.lr}, {"momentum", o.momentum}};
  meta["features"] = features_csv.string();
  if (checkpoint.has_parent_path()) fs::create_directories(checkpoint.parent_path());
  model::save_checkpoint(checkpoint, mlp, meta);
  say(log, "train-mlp: " + std::to_string(rows.size()) + " ROIs, final loss " +
               fmt(h.loss.empty() ? NAN : h.loss.back()) + " train accuracy " +
               fmt(h.accuracy.empty() ? NAN : h.accuracy.back()) + " -> " + checkpoint.string());
  return h;
}

ordered_json DiagnosisReport::to_json() const {
  ordered_json j;
  j["accuracy"] = accuracy;
  j["confusion"] = confusion_json(confusion);
  return j;
}

DiagnosisReport diagnose_stage(const fs::path& mlp_checkpoint, const fs::path& features_csv,
                               const fs::path& predictions_csv) {
  const auto ck = model::load_checkpoint(mlp_checkpoint);
  if (ck.config.value("stage", std::string()) != "mlp")
    throw DataError(mlp_checkpoint.string() + " is not an MLP checkpoint");
  Rng rng(0);
  diagnosis::Mlp mlp(rng);
  model::apply_checkpoint(mlp, ck);
  const auto rows = diagnosis::read_features_csv(features_csv);
  if (rows.empty()) throw DataError(features_csv.string() + ": no feature rows");
  DiagnosisReport rep;
  rep.confusion.assign(diagnosis::kDiagnosticClasses, std::vector<std::size_t>(diagnosis::kDiagnosticClasses, 0));
  std::ofstream f(predictions_csv);
  if (!f) throw DataError("cannot write " + predictions_csv.string());
  f << "roi_id,label,pred,p0,p1,p2,p3\n";
  std::vector<int> pred, gt;
  char buf[64];
  for (const auto& r : rows) {
    const auto d = diagnosis::diagnose(mlp, r.values);
    f << r.roi_id << ',' << r.label << ',' << d.label;
    for (double p : d.probabilities) {
      std::snprintf(buf, sizeof buf, ",%.6f", p);
      f << buf;
    }
    f << '\n';
    pred.push_back(d.label);
    gt.push_back(r.label);
    if (r.label >= 0 && r.label < int(diagnosis::kDiagnosticClasses)) ++rep.confusion[r.label][d.label];
  }
  rep.accuracy = train::accuracy(pred, gt);
  return rep;
}

// ---- evaluation ----------------------------------------------------------------

ordered_json SegReport::to_json() const {
  ordered_json j;
  j["miou"] = miou;
  j["accuracy"] = accuracy;
  ordered_json iou = ordered_json::array();
  for (double v : per_class_iou) {
    if (std::isnan(v))
      iou.push_back(nullptr);
    else
      iou.push_back(v);
  }
  j["per_class_iou"] = iou;
  j["confusion"] = confusion_json(confusion);
  j["masks"] = masks;
  return j;
}

namespace {

std::map<std::string, fs::path> mask_files(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("not a directory: " + root.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".pgm") continue;
    const auto rel = fs::relative(e.path(), root);
    const auto name = rel.filename().string();
    const std::string key =
        (name == "pred.pgm" || name == "mask.pgm") ? rel.parent_path().generic_string() : rel.generic_string();
    if (!out.emplace(key, e.path()).second) throw DataError(root.string() + ": two masks for '" + key + "'");
  }
  return out;
}

}  // namespace

SegReport eval_masks(const fs::path& pred_dir, const fs::path& gt_dir, std::size_t classes) {
  const auto pred = mask_files(pred_dir);
  const auto gt = mask_files(gt_dir);
  if (pred.empty()) throw DataError("no .pgm masks under " + pred_dir.string());
  for (const auto& [k, p] : pred)
    if (!gt.count(k)) throw DataError("no ground truth for " + p.string() + " under " + gt_dir.string());
  train::ConfusionMatrix cm(classes);
  SegReport rep;
  for (const auto& [k, p] : pred) {
    const auto pm = io::read_pgm(p);
    const auto gm = io::read_pgm(gt.at(k));
    if (pm.width != gm.width || pm.height != gm.height)
      throw DataError(p.string() + " and " + gt.at(k).string() + " differ in size");
    io::check_labels(pm, classes, p);
    cm.add(pm.labels, gm.labels, io::LabelMask::kInvalid);
    ++rep.masks;
  }
  rep.miou = cm.miou();
  rep.accuracy = cm.accuracy();
  rep.per_class_iou = cm.per_class_iou();
  rep.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t a = 0; a < classes; ++a)
    for (std::size_t b = 0; b < classes; ++b) rep.confusion[a][b] = cm.at(a, b);
  return rep;
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw DataError("write failed: " + path.string());
}

}  // namespace ynet::pipeline
