// SPDX-License-Identifier: Apache-2.0
//
// Training and inference orchestration: fold-aware training of plane
// networks, 2D prediction of whole volumes and 3D stacking.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "planeseg/augment.hpp"
#include "planeseg/dataset.hpp"
#include "planeseg/loss.hpp"
#include "planeseg/metrics.hpp"
#include "planeseg/network.hpp"
#include "planeseg/optimizer.hpp"

namespace planeseg {

enum class Scenario { per_plane, all_planes };
std::string to_string(Scenario s);
Scenario scenario_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-4;
  double weight_decay = 0.025;
  bool decoupled_weight_decay = false;
  int batch_size = 8;
  std::uint64_t seed = 0;
  Scenario scenario = Scenario::per_plane;
  LossConfig loss;
  AugmentConfig augment;
  /// Probability threshold for hard masks at inference.
  double threshold = 0.5;
  int min_foreground_px = 0;

  AdamConfig adam() const;
  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  double wall_seconds = 0.0;
};

void write_history_csv(const std::filesystem::path& path, const TrainHistory& h);
TrainHistory read_history_csv(const std::filesystem::path& path);

/// Raised when a batch produces a non-finite loss.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::vector<SliceKey> batch)
      : std::runtime_error(what), batch_(std::move(batch)) {}
  const std::vector<SliceKey>& batch() const { return batch_; }

 private:
  std::vector<SliceKey> batch_;
};

/// Loads scans of a manifest on first use and serves slices from them.
class SliceSource {
 public:
  explicit SliceSource(DatasetManifest manifest) : manifest_(std::move(manifest)) {}

  const DatasetManifest& manifest() const { return manifest_; }
  const Volume& volume(const std::string& scan_id);
  const Mask3D& mask(const std::string& scan_id);
  SliceRecord record(const SliceKey& key);

 private:
  struct Scan {
    Volume volume;
    Mask3D mask;
  };
  Scan& scan(const std::string& scan_id);

  DatasetManifest manifest_;
  std::map<std::string, Scan> cache_;
};

/// Mean per-sample combined loss of a probability batch, and optionally its gradient.
struct BatchLoss {
  double loss = 0.0;
  double bce = 0.0;
  double dice = 0.0;
  nn::FeatureMap<float> grad;
};
BatchLoss batch_loss(const nn::FeatureMap<float>& probs, const std::vector<const Mask2*>& masks,
                     const LossConfig& config, bool with_grad);

/// One optimizer over one model.
class Trainer {
 public:
  Trainer(SegmentationModel<float>& model, const TrainConfig& config);

  /// Forward, backward and Adam update on one batch; returns the batch loss
  /// measured before the update.
  double step(const std::vector<const Image2*>& images, const std::vector<const Mask2*>& masks);
  /// Eval-mode loss on one batch.
  double evaluate(const std::vector<const Image2*>& images, const std::vector<const Mask2*>& masks);

  SegmentationModel<float>& model() { return model_; }
  long steps() const { return adam_.steps(); }

 private:
  SegmentationModel<float>& model_;
  TrainConfig config_;
  Adam<float> adam_;
};

/// Copy of every parameter and buffer of a model.
struct ModelState {
  std::vector<nn::Matrix<float>> params;
  std::vector<nn::Matrix<float>> buffers;
};
ModelState snapshot(SegmentationModel<float>& model);
void restore(SegmentationModel<float>& model, const ModelState& state);

struct TrainOptions {
  /// When set: checkpoint.bin, history.csv and fold_split.json are written here.
  std::filesystem::path run_dir;
  std::string plane_label = "X";
  std::function<void(int epoch, double train_loss, double val_loss)> on_epoch;
};

struct TrainResult {
  SegmentationModel<float> model;
  TrainHistory history;
  std::set<std::string> training_scans;
  std::set<std::string> validation_scans;
};

/// Trains on the dataset keys of non-fold scans, validates on fold scans once
/// per epoch and returns the model of the best validation epoch.
TrainResult train(const SliceDataset& dataset, int fold, const FoldPlan& plan, const ModelConfig& model_config,
                  const TrainConfig& train_config, SliceSource& source, const TrainOptions& options = {});

/// Thresholded per-slice predictions of a whole volume along `plane`, each
/// at the slice's native shape.
std::vector<Mask2> predict_slices(SegmentationModel<float>& model, const Volume& volume, PlaneAxis plane,
                                  const AugmentConfig& augment, double threshold = 0.5, int batch_size = 8);

/// Inverse of slicing along `plane`.
Mask3D stack_slices(const std::vector<Mask2>& masks, PlaneAxis plane);

/// Voxelwise majority of an odd number of masks.
Mask3D fuse_majority(const std::vector<Mask3D>& masks);

/// Produces a 3D prediction by slicing a volume along a plane.
class SlicePredictor {
 public:
  virtual ~SlicePredictor() = default;
  virtual Mask3D predict(const Volume& volume, PlaneAxis plane) = 0;
};

class NetworkPredictor : public SlicePredictor {
 public:
  NetworkPredictor(SegmentationModel<float>& model, AugmentConfig augment, double threshold = 0.5, int batch_size = 8)
      : model_(model), augment_(augment), threshold_(threshold), batch_size_(batch_size) {}
  Mask3D predict(const Volume& volume, PlaneAxis plane) override;
  SegmentationModel<float>& model() { return model_; }

 private:
  SegmentationModel<float>& model_;
  AugmentConfig augment_;
  double threshold_;
  int batch_size_;
};

/// Replays a known mask through the slice/stack path.
class OraclePredictor : public SlicePredictor {
 public:
  explicit OraclePredictor(const Mask3D& truth) : truth_(truth) {}
  Mask3D predict(const Volume& volume, PlaneAxis plane) override;

 private:
  const Mask3D& truth_;
};

/// Metrics of one predictor along one plane.
ScanMetrics evaluate_plane(SlicePredictor& predictor, const Volume& volume, const Mask3D& gt, PlaneAxis plane,
                           int fold = kAverageFold);

/// Plane -> predictor. Scenario 2 maps all three planes to one predictor.
using ModelSet = std::map<PlaneAxis, SlicePredictor*>;

/// One ScanMetrics per plane, each predictor evaluated along its own plane.
std::vector<ScanMetrics> evaluate_scan(const ModelSet& models, const Volume& volume, const Mask3D& gt,
                                       Scenario scenario, int fold = kAverageFold);

/// runs/<scenario>/<plane|all>/fold<k>
std::filesystem::path run_directory(const std::filesystem::path& root, Scenario scenario, const std::string& plane_label,
                                    int fold);

}  // namespace planeseg
