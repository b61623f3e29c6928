#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ynet/io/image_io.hpp"

namespace ynet::synth {

enum Tissue : std::uint8_t {
  background = 0,
  benign_epithelium = 1,
  malignant_epithelium = 2,
  normal_stroma = 3,
  desmoplastic_stroma = 4,
  secretion = 5,
  blood = 6,
  necrosis = 7,
};

struct ClassStyle {
  std::array<double, 3> color{};
  double noise = 0.0;  // per-channel Gaussian sigma in 0..255 units
};

struct SynthConfig {
  std::size_t roi_size = 712;
  std::size_t regions = 24;  // Voronoi cells
  std::array<ClassStyle, 8> styles = default_styles();
  // Malignant-fraction cut points: benign | atypia | DCIS | invasive.
  std::array<double, 3> thresholds{0.05, 0.15, 0.35};
  // When set, the malignant fraction is this value instead of a draw.
  std::optional<double> forced_malignant_fraction;

  static std::array<ClassStyle, 8> default_styles();
  void validate() const;
};

struct SynthRoi {
  io::RgbImage image;
  io::LabelMask mask;
  int label = 0;
  std::uint64_t seed = 0;
};

int diagnosis_rule(double malignant_fraction, const std::array<double, 3>& thresholds);
double malignant_fraction(const io::LabelMask& mask);

// Pure function of (config, seed, target). With a target label the
// malignant fraction is drawn from inside that label's band, away from the
// cut points; otherwise the label itself is drawn first.
SynthRoi generate_roi(const SynthConfig& cfg, std::uint64_t seed, std::optional<int> target_label = {});

struct RoiRecord {
  std::string roi_id;
  std::string split;
  int label = 0;
  std::uint64_t seed = 0;
};

// Writes data_dir/{split}/{roi_id}/{image.ppm, mask.pgm, label.txt} and
// data_dir/manifest.csv (roi_id,split,label,seed). Labels cycle 0..3 within
// each split so every split with >= 4 ROIs holds all four diagnoses.
std::vector<RoiRecord> generate_dataset(const SynthConfig& cfg, const std::filesystem::path& data_dir,
                                        std::size_t n_train, std::size_t n_test, std::uint64_t seed);

std::vector<RoiRecord> read_manifest(const std::filesystem::path& data_dir);
std::filesystem::path roi_dir(const std::filesystem::path& data_dir, const RoiRecord& r);

struct LoadedRoi {
  RoiRecord record;
  io::RgbImage image;
  io::LabelMask mask;
};

// Reads image, mask and label.txt; DataError if label.txt disagrees with the
// manifest or the mask has labels outside 0..7.
LoadedRoi load_roi(const std::filesystem::path& data_dir, const RoiRecord& r);

}  // namespace ynet::synth
