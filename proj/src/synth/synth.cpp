#include "ynet/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ynet/error.hpp"
#include "ynet/rng.hpp"

namespace ynet::synth {

namespace fs = std::filesystem;

std::array<ClassStyle, 8> SynthConfig::default_styles() {
  // Rough H&E-like palette; every class differs by >= 40 in some channel.
  return {{
      {{242, 240, 243}, 6},   // background
      {{176, 96, 178}, 12},   // benign epithelium
      {{92, 36, 124}, 14},    // malignant epithelium
      {{238, 168, 196}, 10},  // normal stroma
      {{196, 116, 146}, 12},  // desmoplastic stroma
      {{214, 200, 236}, 8},   // secretion
      {{196, 38, 44}, 12},    // blood
      {{132, 112, 116}, 16},  // necrosis
  }};
}

void SynthConfig::validate() const {
  if (roi_size < 384) throw ConfigError("synth roi_size must be >= 384, got " + std::to_string(roi_size));
  if (regions < 8) throw ConfigError("synth regions must be >= 8, got " + std::to_string(regions));
  if (!(thresholds[0] > 0 && thresholds[0] < thresholds[1] && thresholds[1] < thresholds[2] && thresholds[2] < 1)) {
    throw ConfigError("synth thresholds must be increasing inside (0, 1)");
  }
  if (forced_malignant_fraction && (*forced_malignant_fraction < 0 || *forced_malignant_fraction > 1)) {
    throw ConfigError("forced malignant fraction must lie in [0, 1]");
  }
}

int diagnosis_rule(double f, const std::array<double, 3>& t) {
  if (f < t[0]) return 0;
  if (f < t[1]) return 1;
  if (f < t[2]) return 2;
  return 3;
}

double malignant_fraction(const io::LabelMask& mask) {
  const auto n = std::count(mask.labels.begin(), mask.labels.end(), malignant_epithelium);
  return static_cast<double>(n) / static_cast<double>(mask.labels.size());
}

namespace {

// Middle part of a label's band, so small segmentation errors do not cross a cut.
std::pair<double, double> band(int label, const std::array<double, 3>& t) {
  const double lo[] = {0.0, t[0], t[1], t[2]};
  const double hi[] = {t[0], t[1], t[2], std::min(1.0, t[2] + 0.2)};
  const double margin = 0.2 * (hi[label] - lo[label]);
  return {label == 0 ? 0.0 : lo[label] + margin, hi[label] - margin};
}

// Grows a blob of exactly `count` new pixels of `cls` around (cx, cy): pixels
// are taken in order of a warped distance so blobs are irregular but compact.
// Pixels listed in `keep` are never overwritten.
void grow_blob(io::LabelMask& m, double cx, double cy, std::size_t count, std::uint8_t cls, Rng& rng,
               std::uint8_t keep) {
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  const double lobes = double(2 + rng.below(4));
  const double amp = rng.uniform(0.1, 0.35);
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(m.labels.size());
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x) {
      const std::size_t p = y * m.width + x;
      if (m.labels[p] == cls || m.labels[p] == keep) continue;
      const double dx = double(x) - cx, dy = double(y) - cy;
      const double r = std::sqrt(dx * dx + dy * dy) / (1.0 + amp * std::sin(lobes * std::atan2(dy, dx) + phase));
      order.emplace_back(r, p);
    }
  count = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end());
  for (std::size_t i = 0; i < count; ++i) m.labels[order[i].second] = cls;
}

std::uint8_t draw_common_class(Rng& rng) {
  // background, benign epithelium, normal/desmoplastic stroma, secretion, blood
  static constexpr std::array<std::pair<std::uint8_t, double>, 6> kWeights{{
      {background, 0.25}, {normal_stroma, 0.33}, {benign_epithelium, 0.16},
      {desmoplastic_stroma, 0.12}, {secretion, 0.09}, {blood, 0.05},
  }};
  double u = rng.uniform();
  for (auto [c, w] : kWeights) {
    if (u < w) return c;
    u -= w;
  }
  return normal_stroma;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

SynthRoi generate_roi(const SynthConfig& cfg, std::uint64_t seed, std::optional<int> target_label) {
  cfg.validate();
  if (target_label && (*target_label < 0 || *target_label > 3)) {
    throw ConfigError("target diagnosis label must be 0..3");
  }
  Rng rng(seed);
  const std::size_t S = cfg.roi_size;
  io::LabelMask mask(S, S);

  // Voronoi tissue layout.
  std::vector<std::array<double, 2>> sites(cfg.regions);
  std::vector<std::uint8_t> cls(cfg.regions);
  for (std::size_t r = 0; r < cfg.regions; ++r) {
    sites[r] = {rng.uniform(0, double(S)), rng.uniform(0, double(S))};
    cls[r] = draw_common_class(rng);
  }
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x) {
      std::size_t best = 0;
      double bd = 1e300;
      for (std::size_t r = 0; r < cfg.regions; ++r) {
        const double dx = double(x) - sites[r][0], dy = double(y) - sites[r][1];
        const double d = dx * dx + dy * dy;
        if (d < bd) {
          bd = d;
          best = r;
        }
      }
      mask.at(x, y) = cls[best];
    }

  // Target malignant fraction.
  const int label = target_label ? *target_label : static_cast<int>(rng.below(4));
  double f2;
  if (cfg.forced_malignant_fraction) {
    f2 = *cfg.forced_malignant_fraction;
  } else {
    const auto [lo, hi] = band(label, cfg.thresholds);
    f2 = rng.uniform(lo, hi);
  }
  const auto n_total = static_cast<std::size_t>(std::llround(f2 * double(S * S)));

  // Necrosis: a few small blobs anywhere.
  const std::size_t n_necrosis = rng.below(3);
  for (std::size_t b = 0; b < n_necrosis; ++b) {
    const auto count = static_cast<std::size_t>(rng.uniform(0.005, 0.02) * double(S * S));
    grow_blob(mask, rng.uniform(0, double(S)), rng.uniform(0, double(S)), count, necrosis, rng, 255);
  }

  // Malignant epithelium: 1-3 blobs clustered around one focus, so instances
  // far from the focus contain none.
  if (n_total > 0) {
    const double fx = rng.uniform(0.2, 0.8) * double(S), fy = rng.uniform(0.2, 0.8) * double(S);
    const std::size_t blobs = 1 + rng.below(3);
    std::vector<double> share(blobs);
    double total = 0;
    for (auto& s : share) total += (s = rng.uniform(0.5, 1.5));
    std::size_t placed = 0;
    for (std::size_t b = 0; b < blobs; ++b) {
      const std::size_t count = b + 1 == blobs ? n_total - placed
                                               : static_cast<std::size_t>(double(n_total) * share[b] / total);
      const double spread = 0.12 * double(S);
      grow_blob(mask, fx + rng.uniform(-spread, spread), fy + rng.uniform(-spread, spread), count,
                malignant_epithelium, rng, 255);
      placed += count;
    }
  }

  SynthRoi roi;
  roi.seed = seed;
  roi.label = diagnosis_rule(malignant_fraction(mask), cfg.thresholds);
  roi.image = io::RgbImage{S, S, std::vector<std::uint8_t>(S * S * 3)};
  for (std::size_t p = 0; p < S * S; ++p) {
    const auto& st = cfg.styles[mask.labels[p]];
    for (std::size_t c = 0; c < 3; ++c) roi.image.pixels[p * 3 + c] = to_byte(st.color[c] + st.noise * rng.normal());
  }
  roi.mask = std::move(mask);
  return roi;
}

fs::path roi_dir(const fs::path& data_dir, const RoiRecord& r) { return data_dir / r.split / r.roi_id; }

namespace {

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  if (!f) throw DataError("cannot write " + p.string());
  f << s;
  if (!f) throw DataError("write failed for " + p.string());
}

}  // namespace

std::vector<RoiRecord> generate_dataset(const SynthConfig& cfg, const fs::path& data_dir, std::size_t n_train,
                                        std::size_t n_test, std::uint64_t seed) {
  cfg.validate();
  if (n_train + n_test == 0) throw ConfigError("dataset must contain at least one ROI");
  std::vector<RoiRecord> records;
  std::error_code ec;
  fs::create_directories(data_dir, ec);
  if (ec) throw DataError("cannot create " + data_dir.string() + ": " + ec.message());
  const std::pair<const char*, std::size_t> splits[] = {{"train", n_train}, {"test", n_test}};
  for (std::size_t s = 0; s < 2; ++s) {
    const auto [split, n] = splits[s];
    for (std::size_t i = 0; i < n; ++i) {
      RoiRecord r;
      r.split = split;
      char id[32];
      std::snprintf(id, sizeof id, "%s_%04zu", split, i);
      r.roi_id = id;
      r.seed = derive_seed(seed, s, i);
      const auto roi = generate_roi(cfg, r.seed, static_cast<int>(i % 4));
      r.label = roi.label;
      const fs::path dir = roi_dir(data_dir, r);
      fs::create_directories(dir, ec);
      if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
      io::write_ppm(dir / "image.ppm", roi.image);
      io::write_pgm(dir / "mask.pgm", roi.mask);
      write_text(dir / "label.txt", std::to_string(roi.label) + "\n");
      records.push_back(r);
    }
  }
  std::ostringstream m;
  m << "roi_id,split,label,seed\n";
  for (const auto& r : records) m << r.roi_id << ',' << r.split << ',' << r.label << ',' << r.seed << '\n';
  write_text(data_dir / "manifest.csv", m.str());
  return records;
}

std::vector<RoiRecord> read_manifest(const fs::path& data_dir) {
  const fs::path path = data_dir / "manifest.csv";
  std::ifstream f(path);
  if (!f) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(f, line) || line != "roi_id,split,label,seed") {
    throw DataError(path.string() + ": expected header roi_id,split,label,seed");
  }
  std::vector<RoiRecord> out;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    RoiRecord r;
    std::string label, seed;
    if (!std::getline(ss, r.roi_id, ',') || !std::getline(ss, r.split, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, seed)) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 4 columns");
    }
    try {
      r.label = std::stoi(label);
      r.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad label or seed");
    }
    if (r.label < 0 || r.label > 3) throw DataError(path.string() + ":" + std::to_string(lineno) + ": label out of range");
    out.push_back(std::move(r));
  }
  return out;
}

LoadedRoi load_roi(const fs::path& data_dir, const RoiRecord& r) {
  const fs::path dir = roi_dir(data_dir, r);
  LoadedRoi l{r, io::read_ppm(dir / "image.ppm"), io::read_pgm(dir / "mask.pgm")};
  io::check_labels(l.mask, 8, dir / "mask.pgm");
  if (l.mask.width != l.image.width || l.mask.height != l.image.height) {
    throw DataError(dir.string() + ": image and mask sizes differ");
  }
  std::ifstream f(dir / "label.txt");
  int label = -1;
  if (!(f >> label) || label != r.label) {
    throw DataError((dir / "label.txt").string() + ": label does not match the manifest");
  }
  return l;
}

}  // namespace ynet::synth
