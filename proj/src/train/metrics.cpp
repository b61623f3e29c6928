#include "ynet/train/metrics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ynet/error.hpp"

namespace ynet::train {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : k_(classes), counts_(classes * classes, 0) {
  if (classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(int pred, int gt) {
  if (pred < 0 || gt < 0 || std::size_t(pred) >= k_ || std::size_t(gt) >= k_) {
    throw InputError("label pair (" + std::to_string(pred) + ", " + std::to_string(gt) + ") outside 0.." +
                     std::to_string(k_ - 1));
  }
  ++counts_[std::size_t(gt) * k_ + std::size_t(pred)];
}

void ConfusionMatrix::add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, int ignore) {
  if (pred.size() != gt.size()) {
    throw DimensionError("confusion: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(gt.size()) + " ground-truth labels");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == ignore) continue;
    add(pred[i], gt[i]);
  }
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }

std::vector<double> ConfusionMatrix::per_class_iou() const {
  std::vector<double> iou(k_);
  for (std::size_t c = 0; c < k_; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t j = 0; j < k_; ++j) {
      row += at(c, j);
      col += at(j, c);
    }
    const std::uint64_t uni = row + col - at(c, c);
    iou[c] = uni == 0 ? std::numeric_limits<double>::quiet_NaN() : double(at(c, c)) / double(uni);
  }
  return iou;
}

double ConfusionMatrix::miou() const {
  double s = 0;
  std::size_t n = 0;
  for (double v : per_class_iou()) {
    if (std::isnan(v)) continue;
    s += v;
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / double(n);
}

double ConfusionMatrix::accuracy() const {
  std::uint64_t hit = 0;
  for (std::size_t c = 0; c < k_; ++c) hit += at(c, c);
  const auto t = total();
  return t == 0 ? std::numeric_limits<double>::quiet_NaN() : double(hit) / double(t);
}

double miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, std::size_t classes) {
  ConfusionMatrix cm(classes);
  cm.add(pred, gt);
  return cm.miou();
}

double accuracy(std::span<const int> pred, std::span<const int> gt) {
  if (pred.size() != gt.size()) {
    throw DimensionError("accuracy: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(gt.size()) +
                         " labels");
  }
  if (pred.empty()) throw InputError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == gt[i];
  return double(hit) / double(pred.size());
}

}  // namespace ynet::train
