#include "ynet/tiling/tiling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ynet/error.hpp"

namespace ynet::tiling {

std::vector<std::size_t> axis_origins(std::size_t length, std::size_t size, std::size_t overlap) {
  if (size == 0) throw GeometryError("instance size must be positive");
  if (overlap >= size) {
    throw GeometryError("overlap " + std::to_string(overlap) + " must be smaller than instance size " +
                        std::to_string(size));
  }
  if (length < size) {
    throw GeometryError("ROI extent " + std::to_string(length) + " is smaller than the instance size " +
                        std::to_string(size));
  }
  const std::size_t stride = size - overlap;
  std::vector<std::size_t> o;
  for (std::size_t x = 0; x + size < length; x += stride) o.push_back(x);
  // Snap: the last instance ends exactly at the border.
  if (o.empty() || o.back() != length - size) o.push_back(length - size);
  return o;
}

InstanceGrid make_grid(std::size_t roi_width, std::size_t roi_height, std::size_t size, std::size_t overlap) {
  InstanceGrid g;
  g.roi_width = roi_width;
  g.roi_height = roi_height;
  g.size = size;
  g.overlap = overlap;
  const auto xs = axis_origins(roi_width, size, overlap);
  const auto ys = axis_origins(roi_height, size, overlap);
  for (auto y : ys)
    for (auto x : xs) g.origins.push_back({x, y});
  return g;
}

std::vector<float> extract_patch(const io::RgbImage& roi, const Origin& o, std::size_t size) {
  if (o.x + size > roi.width || o.y + size > roi.height) throw GeometryError("instance extends past the ROI");
  std::vector<float> out(3 * size * size);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        out[(c * size + y) * size + x] = static_cast<float>(roi.at(o.x + x, o.y + y, c)) / 255.0f;
  return out;
}

io::LabelMask extract_mask(const io::LabelMask& mask, const Origin& o, std::size_t size) {
  if (o.x + size > mask.width || o.y + size > mask.height) throw GeometryError("instance extends past the mask");
  io::LabelMask m(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) m.at(x, y) = mask.at(o.x + x, o.y + y);
  return m;
}

Stitcher::Stitcher(const InstanceGrid& grid, std::size_t classes)
    : grid_(grid),
      classes_(classes),
      sum_(classes * grid.roi_width * grid.roi_height, 0.0),
      hits_(grid.roi_width * grid.roi_height, 0),
      added_(grid.count(), false) {}

void Stitcher::add(std::size_t i, std::span<const float> probs) {
  const std::size_t s = grid_.size;
  if (i >= grid_.count()) throw GeometryError("instance index " + std::to_string(i) + " outside the grid");
  if (probs.size() != classes_ * s * s) {
    throw DimensionError("stitch: instance " + std::to_string(i) + " has " + std::to_string(probs.size()) +
                         " probabilities, expected " + std::to_string(classes_ * s * s));
  }
  if (added_[i]) throw StateError("stitch: instance " + std::to_string(i) + " added twice");
  added_[i] = true;
  const auto [ox, oy] = grid_.origins[i];
  const std::size_t W = grid_.roi_width, H = grid_.roi_height;
  for (std::size_t k = 0; k < classes_; ++k)
    for (std::size_t y = 0; y < s; ++y) {
      double* dst = sum_.data() + (k * H + oy + y) * W + ox;
      const float* src = probs.data() + (k * s + y) * s;
      for (std::size_t x = 0; x < s; ++x) dst[x] += src[x];
    }
  for (std::size_t y = 0; y < s; ++y)
    for (std::size_t x = 0; x < s; ++x) ++hits_[(oy + y) * W + ox + x];
}

io::LabelMask Stitcher::finish() const {
  const std::size_t W = grid_.roi_width, H = grid_.roi_height;
  io::LabelMask out(W, H);
  for (std::size_t p = 0; p < W * H; ++p) {
    if (hits_[p] == 0) throw Error("stitch: pixel " + std::to_string(p) + " is not covered by any instance");
    const double n = hits_[p];
    std::size_t best = 0;
    double best_v = sum_[p] / n;
    for (std::size_t k = 1; k < classes_; ++k) {
      const double v = sum_[k * W * H + p] / n;
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    out.labels[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

io::LabelMask stitch_seg(const std::vector<std::vector<float>>& probs, const InstanceGrid& grid, std::size_t classes) {
  if (probs.size() != grid.count()) {
    throw DimensionError("stitch: " + std::to_string(probs.size()) + " instances for a grid of " +
                         std::to_string(grid.count()));
  }
  Stitcher s(grid, classes);
  for (std::size_t i = 0; i < probs.size(); ++i) s.add(i, probs[i]);
  return s.finish();
}

double max_probability(std::span<const double> zbar) {
  if (zbar.empty()) throw InputError("empty probability vector");
  double sum = 0.0;
  for (double v : zbar) {
    if (!(v >= 0.0) || v > 1.0) throw InputError("probability entry " + std::to_string(v) + " outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-4) throw InputError("probabilities sum to " + std::to_string(sum) + ", not 1");
  return *std::max_element(zbar.begin(), zbar.end());
}

bool select_discriminative(std::span<const double> zbar, double tau) { return max_probability(zbar) > tau; }

DiscriminativeMap make_discriminative_map(const InstanceGrid& grid, std::span<const double> confidences, double tau) {
  if (confidences.size() != grid.count()) {
    throw DimensionError("discriminative map: " + std::to_string(confidences.size()) + " confidences for " +
                         std::to_string(grid.count()) + " instances");
  }
  DiscriminativeMap m;
  m.width = grid.roi_width;
  m.height = grid.roi_height;
  m.confidence.assign(confidences.begin(), confidences.end());
  m.probability.assign(m.width * m.height, 0.0f);
  m.binary.assign(m.width * m.height, 0);
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const bool disc = confidences[i] > tau;
    m.discriminative.push_back(disc);
    const auto [ox, oy] = grid.origins[i];
    const auto c = static_cast<float>(confidences[i]);
    for (std::size_t y = oy; y < oy + grid.size; ++y)
      for (std::size_t x = ox; x < ox + grid.size; ++x) {
        auto& p = m.probability[y * m.width + x];
        p = std::max(p, c);
        if (disc) m.binary[y * m.width + x] = 1;
      }
  }
  return m;
}

DiscriminativeMask fuse_discriminative_mask(const io::LabelMask& seg, const DiscriminativeMap& dmap) {
  if (seg.width != dmap.width || seg.height != dmap.height) {
    throw DimensionError("fuse: mask " + std::to_string(seg.width) + "x" + std::to_string(seg.height) + " vs map " +
                         std::to_string(dmap.width) + "x" + std::to_string(dmap.height));
  }
  DiscriminativeMask d;
  d.mask = seg;
  for (std::size_t p = 0; p < seg.labels.size(); ++p) {
    if (dmap.binary[p]) {
      ++d.valid_pixels;
    } else {
      d.mask.labels[p] = io::LabelMask::kInvalid;
    }
  }
  if (d.valid_pixels == 0) {
    d.mask = seg;
    d.valid_pixels = seg.labels.size();
    d.fallback = true;
  }
  return d;
}

std::vector<double> tau_grid() {
  std::vector<double> g;
  for (int p = 25; p <= 95; p += 5) g.push_back(p / 100.0);
  return g;
}

TauChoice pick_tau(std::span<const double> candidates, std::span<const double> accuracies) {
  if (candidates.empty() || candidates.size() != accuracies.size()) {
    throw InputError("choose_tau: need one accuracy per candidate threshold");
  }
  TauChoice c;
  c.candidates.assign(candidates.begin(), candidates.end());
  c.accuracies.assign(accuracies.begin(), accuracies.end());
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (accuracies[i] > accuracies[best] || (accuracies[i] == accuracies[best] && candidates[i] < candidates[best])) {
      best = i;
    }
  }
  c.tau = candidates[best];
  c.accuracy = accuracies[best];
  return c;
}

TauChoice choose_tau(std::size_t validation_rois, const std::function<double(double)>& accuracy_at) {
  if (validation_rois == 0) throw InputError("choose_tau: empty validation set");
  const auto grid = tau_grid();
  std::vector<double> acc;
  for (double t : grid) acc.push_back(accuracy_at(t));
  return pick_tau(grid, acc);
}

}  // namespace ynet::tiling
