#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "ynet/model/ynet.hpp"
#include "ynet/rng.hpp"

namespace ynet::train {

struct TrainConfig {
  std::size_t epochs = 100;
  double lr0 = 1e-4;
  double decay_factor = 2.0;
  std::size_t decay_every = 30;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  std::size_t batch_size = 4;
  double momentum = 0.0;
  bool augment = true;
  std::vector<double> class_weights;  // tissue classes; empty = uniform
  // Stop once eval-mode pixel accuracy on the training set reaches this
  // value (checked every `check_every` epochs). 0 disables the check.
  double stop_at_train_accuracy = 0.0;
  std::size_t check_every = 5;

  void validate() const;
};

// lr0 / decay_factor^floor(epoch / decay_every)
double lr_at(std::size_t epoch, const TrainConfig& cfg);

// One training instance: planar 8-bit RGB [3, S, S], labels [S, S] and the
// parent ROI's diagnosis (-1 when unknown).
struct Sample {
  std::size_t size = 0;
  std::vector<std::uint8_t> rgb;
  std::vector<std::uint8_t> mask;
  int label = -1;
};

struct AugmentDraw {
  bool hflip = false, vflip = false;
  std::size_t crop = 0, x0 = 0, y0 = 0;  // crop side and corner; crop == size is a no-op
};

AugmentDraw draw_augment(std::size_t size, Rng& rng);
// image: [3, S, S] floats; mask: S*S labels. Crop, resize back to S (bilinear
// image, nearest mask), then flips.
void apply_augment(std::vector<float>& image, std::vector<std::uint8_t>& mask, std::size_t size,
                   const AugmentDraw& d);

// Deterministic 90:10 style split: returns (train indices, val indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                           std::uint64_t seed);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double seg_loss = 0, cls_loss = 0;  // joint runs only
  double miou = std::numeric_limits<double>::quiet_NaN();  // validation set (training set if none)
  double train_accuracy = std::numeric_limits<double>::quiet_NaN();  // when checked
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<nn::NamedTensor<float>> best_state;  // detached copies
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Seg-only stage. Best snapshot by validation loss (training loss when the
// validation set is empty).
TrainResult train_segmentation(model::YNet<float>& net, const std::vector<Sample>& train,
                               const std::vector<Sample>& val, const TrainConfig& cfg,
                               const EpochCallback& on_epoch = {});

// Joint stage: L = Lseg + Lcls per instance. StateError without a head.
TrainResult train_joint(model::YNet<float>& net, const std::vector<Sample>& train, const std::vector<Sample>& val,
                        const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// CSV: epoch,lr,train_loss,val_loss[,seg_loss,cls_loss],miou
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& h, bool joint);

// Batched eval-mode prediction. Returns per-pixel labels per sample.
std::vector<std::vector<std::uint8_t>> predict_masks(model::YNet<float>& net, const std::vector<Sample>& samples,
                                                     std::size_t batch_size = 4);
double pixel_accuracy(model::YNet<float>& net, const std::vector<Sample>& samples, std::size_t batch_size = 4);

// Copies tensors in `state` into the module (names must match).
void load_state(nn::Module<float>& m, const std::vector<nn::NamedTensor<float>>& state);

}  // namespace ynet::train
