#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ynet/diagnosis/features.hpp"
#include "ynet/diagnosis/mlp.hpp"
#include "ynet/model/ynet.hpp"
#include "ynet/synth/synth.hpp"
#include "ynet/tiling/tiling.hpp"
#include "ynet/train/train.hpp"

namespace ynet::pipeline {

namespace fs = std::filesystem;

// The run configuration file. Keys are exactly those listed in kConfigKeys;
// anything else is rejected.
struct RunConfig {
  model::NetworkConfig net;
  std::size_t instance_size = tiling::kInstanceSize;
  std::size_t overlap = tiling::kOverlap;
  std::size_t epochs = 100;
  double lr0 = 1e-4;
  std::size_t decay_every = 30;
  double decay_factor = 2.0;
  std::size_t batch_size = 4;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  std::optional<double> tau;  // empty = "auto" (chosen on validation ROIs)
  fs::path data_dir = "data";
  fs::path out_dir = "runs";

  static const std::vector<std::string>& keys();
  // ConfigError on unknown keys, wrong types or invalid values.
  static RunConfig from_json(const nlohmann::json& j);
  // All keys in canonical order.
  nlohmann::ordered_json to_json() const;
  void validate() const;
};

// Knobs that are not part of the config file (command-line only).
struct TrainOptions {
  double momentum = 0.0;
  bool augment = true;
  double stop_at_train_accuracy = 0.0;
};

struct MlpOptions {
  std::size_t epochs = 500;
  double lr = 1e-3;
  double momentum = 0.0;
};

using Log = std::function<void(const std::string&)>;

// Caps internal worker threads (0 = hardware concurrency).
void set_threads(std::size_t n);
std::size_t threads();
// Runs fn(i) for i in [0, n) on up to threads() workers. The first exception
// is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Instances of one ROI, labelled with the ROI's diagnosis.
std::vector<train::Sample> roi_instances(const io::RgbImage& image, const io::LabelMask& mask, int label,
                                         const tiling::InstanceGrid& grid);
std::vector<train::Sample> split_instances(const RunConfig& cfg, const std::string& split);

// Stage checkpoints embed the effective config, the stage name and the
// command-line options used.
struct StageFiles {
  fs::path checkpoint, history;
};
StageFiles seg_files(const RunConfig& cfg);
StageFiles joint_files(const RunConfig& cfg);

train::TrainResult train_seg_stage(const RunConfig& cfg, const TrainOptions& opt, const Log& log = {});
// Starts from the segmentation checkpoint and attaches a fresh head.
train::TrainResult train_joint_stage(const RunConfig& cfg, const TrainOptions& opt, const Log& log = {});

// Network rebuilt from a checkpoint's embedded config; the head is attached
// when the checkpoint came from the joint stage.
std::unique_ptr<model::YNet<float>> load_network(const fs::path& checkpoint);

struct RoiPrediction {
  tiling::InstanceGrid grid;
  io::LabelMask mask;
  std::vector<std::vector<double>> zbar;  // per instance; empty without a head
  std::vector<double> confidence;         // max(zbar) per instance
};

RoiPrediction infer_roi(model::YNet<float>& net, const io::RgbImage& image, std::size_t instance_size,
                        std::size_t overlap);

// Stitched masks and instance confidences for every ROI of a split, under
// out_dir/infer/<split>/: <roi_id>/pred.pgm and grid.csv.
struct GridRow {
  std::string roi_id;
  std::size_t x = 0, y = 0;
  double confidence = 0.0;
  std::optional<bool> discriminative;
};
void infer_stage(const RunConfig& cfg, const std::string& split, const Log& log = {});
fs::path infer_dir(const RunConfig& cfg, const std::string& split);
void write_grid_csv(const fs::path& path, const std::vector<GridRow>& rows);
std::vector<GridRow> read_grid_csv(const fs::path& path);

// Predicted mask plus instance confidences of one inferred ROI.
struct InferredRoi {
  synth::RoiRecord record;
  io::LabelMask mask;
  tiling::InstanceGrid grid;
  std::vector<double> confidence;
};
std::vector<InferredRoi> load_inferred(const RunConfig& cfg, const std::string& split);

// Discriminative features at tau; tau = nullopt gives plain-mask features.
std::vector<diagnosis::FeatureRow> roi_features(const std::vector<InferredRoi>& rois, std::optional<double> tau);

// Grid search over tiling::tau_grid(): an MLP trained on the training ROIs
// (minus a validation share) scores each tau on the held-out ROIs.
tiling::TauChoice select_tau_stage(const RunConfig& cfg, const MlpOptions& mlp, const Log& log = {});
fs::path tau_file(const RunConfig& cfg);
// Config tau, else the stored selection; StateError when neither exists.
double resolve_tau(const RunConfig& cfg);

// Writes out_dir/features/<split>_disc.csv and <split>_plain.csv, and fills
// the discriminative column of the split's grid.csv.
void features_stage(const RunConfig& cfg, const std::string& split, const Log& log = {});
fs::path features_file(const RunConfig& cfg, const std::string& split, bool discriminative);

diagnosis::MlpHistory train_mlp_stage(const RunConfig& cfg, const fs::path& features_csv, const fs::path& checkpoint,
                                      const MlpOptions& mlp, const Log& log = {});

struct DiagnosisReport {
  double accuracy = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [gt][pred]
  nlohmann::ordered_json to_json() const;
};
// Writes predictions CSV (roi_id,label,pred,p0..p3) next to the report.
DiagnosisReport diagnose_stage(const fs::path& mlp_checkpoint, const fs::path& features_csv,
                               const fs::path& predictions_csv);

// Segmentation metrics over two directories of PGM masks. A file named
// pred.pgm or mask.pgm is keyed by its directory, any other by its path.
struct SegReport {
  double miou = 0.0, accuracy = 0.0;
  std::vector<double> per_class_iou;  // NaN for classes absent from both
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t masks = 0;
  nlohmann::ordered_json to_json() const;
};
SegReport eval_masks(const fs::path& pred_dir, const fs::path& gt_dir, std::size_t classes);

void write_json(const fs::path& path, const nlohmann::ordered_json& j);

}  // namespace ynet::pipeline
