#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ynet::train {

// K x K counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes);

  // DimensionError on length mismatch, InputError on labels >= K. Entries
  // whose ground truth equals `ignore` are skipped.
  void add(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, int ignore = -1);
  void add(int pred, int gt);

  std::size_t classes() const { return k_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * k_ + pred]; }
  std::uint64_t total() const;

  // IoU per class; classes absent from both prediction and ground truth are
  // reported as NaN and skipped by miou().
  std::vector<double> per_class_iou() const;
  double miou() const;
  double accuracy() const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

double miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, std::size_t classes);
double accuracy(std::span<const int> pred, std::span<const int> gt);

}  // namespace ynet::train
