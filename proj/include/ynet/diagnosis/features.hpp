#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ynet/io/image_io.hpp"

namespace ynet::diagnosis {

inline constexpr std::size_t kTissueClasses = 8;
inline constexpr std::size_t kPairBins = kTissueClasses * (kTissueClasses + 1) / 2;  // 36
inline constexpr std::size_t kFeatureDim = kTissueClasses + kPairBins;               // 44

// Bin of the unordered pair {a, b}, a <= b < k: rows of the upper triangle.
constexpr std::size_t pair_index(std::size_t a, std::size_t b, std::size_t k = kTissueClasses) {
  if (a > b) return pair_index(b, a, k);
  return a * k - (a * (a - 1)) / 2 + (b - a);
}

// Label frequencies over valid pixels. InputError if no pixel is valid.
std::array<double, kTissueClasses> frequency_hist(const io::LabelMask& mask);

struct CoocHist {
  std::array<double, kPairBins> bins{};
  std::size_t pairs = 0;  // 0 -> all-zero vector, flagged
};

// 4-connected neighbour pairs with both ends valid, counted as unordered
// label pairs and normalized by the number of pairs.
CoocHist cooccurrence_hist(const io::LabelMask& mask);

struct FeatureVector {
  std::array<double, kFeatureDim> values{};
  bool no_pairs = false;
};

FeatureVector extract_features(const io::LabelMask& mask);

struct FeatureRow {
  std::string roi_id;
  std::array<double, kFeatureDim> values{};
  int label = 0;
};

// CSV columns: roi_id,f0..f7,c0..c35,label. Values use %.17g so they
// round-trip exactly.
void write_features_csv(const std::filesystem::path& path, const std::vector<FeatureRow>& rows);
std::vector<FeatureRow> read_features_csv(const std::filesystem::path& path);

}  // namespace ynet::diagnosis
