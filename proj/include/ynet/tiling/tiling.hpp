#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "ynet/io/image_io.hpp"

namespace ynet::tiling {

inline constexpr std::size_t kInstanceSize = 384;
inline constexpr std::size_t kOverlap = 56;

struct Origin {
  std::size_t x = 0, y = 0;
  bool operator==(const Origin&) const = default;
};

// Instance origins over an ROI, row-major (y outer, x inner).
struct InstanceGrid {
  std::size_t roi_width = 0, roi_height = 0;
  std::size_t size = kInstanceSize, overlap = kOverlap;
  std::vector<Origin> origins;

  std::size_t count() const { return origins.size(); }
  bool covers(std::size_t i, std::size_t x, std::size_t y) const {
    return x >= origins[i].x && x < origins[i].x + size && y >= origins[i].y && y < origins[i].y + size;
  }
};

// Origins along one axis: multiples of (size - overlap), with the last one
// snapped to length - size so the far border is covered.
std::vector<std::size_t> axis_origins(std::size_t length, std::size_t size, std::size_t overlap);

// GeometryError if the ROI is smaller than an instance or overlap >= size.
InstanceGrid make_grid(std::size_t roi_width, std::size_t roi_height, std::size_t size = kInstanceSize,
                       std::size_t overlap = kOverlap);

// Crop of one instance as planar float [3, size, size] scaled to [0, 1].
std::vector<float> extract_patch(const io::RgbImage& roi, const Origin& o, std::size_t size);
io::LabelMask extract_mask(const io::LabelMask& mask, const Origin& o, std::size_t size);

// Averages per-pixel class probabilities over covering instances, then takes
// the argmax (ties go to the lowest label). Sums are kept in double.
class Stitcher {
 public:
  Stitcher(const InstanceGrid& grid, std::size_t classes);
  // probs: [classes, size, size] for instance i.
  void add(std::size_t i, std::span<const float> probs);
  io::LabelMask finish() const;

 private:
  const InstanceGrid& grid_;
  std::size_t classes_;
  std::vector<double> sum_;  // [classes, H, W]
  std::vector<std::uint32_t> hits_;
  std::vector<bool> added_;
};

io::LabelMask stitch_seg(const std::vector<std::vector<float>>& probs, const InstanceGrid& grid, std::size_t classes);

// max(zbar) > tau, strictly. InputError unless zbar is a probability vector
// (non-negative, sums to 1 within 1e-4).
bool select_discriminative(std::span<const double> zbar, double tau);
double max_probability(std::span<const double> zbar);

// ROI-level map: every pixel carries the largest confidence among the
// instances covering it, so thresholding it marks exactly the pixels under
// at least one discriminative instance.
struct DiscriminativeMap {
  std::size_t width = 0, height = 0;
  std::vector<double> confidence;  // per instance, max(zbar)
  std::vector<bool> discriminative;  // per instance
  std::vector<float> probability;  // per pixel
  std::vector<std::uint8_t> binary;  // per pixel, 1 = under a discriminative instance
};

DiscriminativeMap make_discriminative_map(const InstanceGrid& grid, std::span<const double> confidences, double tau);

struct DiscriminativeMask {
  io::LabelMask mask;  // kInvalid outside discriminative instances
  std::size_t valid_pixels = 0;
  bool fallback = false;  // no instance was discriminative; full mask used
};

DiscriminativeMask fuse_discriminative_mask(const io::LabelMask& seg, const DiscriminativeMap& dmap);

// Threshold grid 0.25, 0.30, ..., 0.95.
std::vector<double> tau_grid();

struct TauChoice {
  double tau = 0.0;
  double accuracy = 0.0;
  std::vector<double> candidates, accuracies;
};

// Highest accuracy wins; ties go to the smallest tau.
TauChoice pick_tau(std::span<const double> candidates, std::span<const double> accuracies);
// Evaluates `accuracy_at` over tau_grid(). InputError for no validation ROIs.
TauChoice choose_tau(std::size_t validation_rois, const std::function<double(double)>& accuracy_at);

}  // namespace ynet::tiling
