// SPDX-License-Identifier: Apache-2.0

#include "planeseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "planeseg/checkpoint.hpp"
#include "planeseg/volume_io.hpp"

namespace planeseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Scenario s) { return s == Scenario::per_plane ? "per_plane" : "all_planes"; }

Scenario scenario_from_string(const std::string& s) {
  if (s == "per_plane") return Scenario::per_plane;
  if (s == "all_planes") return Scenario::all_planes;
  throw InvalidArgument("unknown scenario '" + s + "' (expected per_plane or all_planes)");
}

AdamConfig TrainConfig::adam() const {
  AdamConfig a;
  a.learning_rate = learning_rate;
  a.weight_decay = weight_decay;
  a.decoupled = decoupled_weight_decay;
  return a;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be non-negative");
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
  if (min_foreground_px < 0) throw InvalidArgument("min_foreground_px must be non-negative");
  loss.validate();
  augment.validate();
  if (augment.crop_to % kOutputStride != 0) {
    throw InvalidArgument("crop_to must be a multiple of " + std::to_string(kOutputStride));
  }
}

// ---------------------------------------------------------------------------

void write_history_csv(const fs::path& path, const TrainHistory& h) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n";
  char buf[96];
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e + 1, h.train_loss[e], h.val_loss.at(e));
    out << buf;
  }
}

TrainHistory read_history_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,val_loss") {
    throw IoError(path.string() + ": expected header 'epoch,train_loss,val_loss'");
  }
  TrainHistory h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int epoch = 0;
    double tr = 0.0, va = 0.0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf", &epoch, &tr, &va) != 3) {
      throw IoError(path.string() + ": malformed row '" + line + "'");
    }
    h.train_loss.push_back(tr);
    h.val_loss.push_back(va);
  }
  for (std::size_t e = 0; e < h.val_loss.size(); ++e) {
    if (h.best_epoch < 0 || h.val_loss[e] < h.best_val_loss) {
      h.best_epoch = static_cast<int>(e) + 1;
      h.best_val_loss = h.val_loss[e];
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

SliceSource::Scan& SliceSource::scan(const std::string& scan_id) {
  auto it = cache_.find(scan_id);
  if (it != cache_.end()) return it->second;
  const ManifestEntry& e = manifest_.find(scan_id);
  Scan s{normalize(load_image(manifest_.resolve(e.volume_path))), load_mask(manifest_.resolve(e.mask_path))};
  if (!(s.volume.shape() == s.mask.shape())) {
    throw IoError("scan '" + scan_id + "': image shape " + to_string(s.volume.shape()) + " differs from mask shape " +
                  to_string(s.mask.shape()));
  }
  s.volume.scan_id = scan_id;
  s.volume.patient_id = e.patient_id;
  return cache_.emplace(scan_id, std::move(s)).first->second;
}

const Volume& SliceSource::volume(const std::string& scan_id) { return scan(scan_id).volume; }
const Mask3D& SliceSource::mask(const std::string& scan_id) { return scan(scan_id).mask; }

SliceRecord SliceSource::record(const SliceKey& key) {
  Scan& s = scan(key.scan_id);
  return extract_plane(s.volume, s.mask, key.plane, key.index);
}

// ---------------------------------------------------------------------------

BatchLoss batch_loss(const nn::FeatureMap<float>& probs, const std::vector<const Mask2*>& masks,
                     const LossConfig& config, bool with_grad) {
  using RowArray = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  if (probs.channels() != 1 || probs.batch != static_cast<int>(masks.size())) {
    throw InvalidArgument("probability batch does not match the mask count");
  }
  BatchLoss out;
  if (with_grad) out.grad = nn::FeatureMap<float>(1, probs.batch, probs.height, probs.width);
  if (!probs.data.allFinite()) {
    out.loss = out.bce = out.dice = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double inv_b = 1.0 / probs.batch;
  for (int n = 0; n < probs.batch; ++n) {
    const Mask2& m = *masks[n];
    if (m.rows() != probs.height || m.cols() != probs.width) throw InvalidArgument("mask shape differs from the batch");
    Eigen::Map<const RowArray> p(probs.data.data() + n * probs.plane(), probs.height, probs.width);
    const auto y = m.cast<float>();
    const LossTerms<float> t = combined_loss_terms(p, y, config);
    out.loss += inv_b * t.total;
    out.bce += inv_b * t.bce;
    out.dice += inv_b * t.dice;
    if (with_grad) {
      Eigen::Map<RowArray> g(out.grad.data.data() + n * probs.plane(), probs.height, probs.width);
      g = combined_loss_gradient(p, y, config) * static_cast<float>(inv_b);
    }
  }
  return out;
}

Trainer::Trainer(SegmentationModel<float>& model, const TrainConfig& config)
    : model_(model), config_(config), adam_(config.adam(), model.registry().params) {
  config_.validate();
}

double Trainer::step(const std::vector<const Image2*>& images, const std::vector<const Mask2*>& masks) {
  const nn::FeatureMap<float> x = pack_batch<float>(images, model_.config().input_channels());
  model_.zero_grad();
  const nn::FeatureMap<float> probs = model_.forward(x, nn::Mode::train);
  const BatchLoss bl = batch_loss(probs, masks, config_.loss, true);
  if (!std::isfinite(bl.loss)) return bl.loss;
  model_.backward(bl.grad);
  adam_.step();
  return bl.loss;
}

double Trainer::evaluate(const std::vector<const Image2*>& images, const std::vector<const Mask2*>& masks) {
  const nn::FeatureMap<float> x = pack_batch<float>(images, model_.config().input_channels());
  return batch_loss(model_.forward(x, nn::Mode::eval), masks, config_.loss, false).loss;
}

ModelState snapshot(SegmentationModel<float>& model) {
  ModelState s;
  auto reg = model.registry();
  for (auto* p : reg.params) s.params.push_back(p->value);
  for (auto* b : reg.buffers) s.buffers.push_back(b->value);
  return s;
}

void restore(SegmentationModel<float>& model, const ModelState& state) {
  auto reg = model.registry();
  if (reg.params.size() != state.params.size() || reg.buffers.size() != state.buffers.size()) {
    throw InvalidArgument("model state does not match the model");
  }
  for (std::size_t i = 0; i < reg.params.size(); ++i) reg.params[i]->value = state.params[i];
  for (std::size_t i = 0; i < reg.buffers.size(); ++i) reg.buffers[i]->value = state.buffers[i];
}

// ---------------------------------------------------------------------------

namespace {

json keys_json(const std::vector<SliceKey>& keys) {
  json a = json::array();
  for (const auto& k : keys) a.push_back({{"scan_id", k.scan_id}, {"plane", plane_tag(k.plane)}, {"index", k.index}});
  return a;
}

struct Batch {
  std::vector<Image2> images;
  std::vector<Mask2> masks;

  std::vector<const Image2*> image_ptrs() const {
    std::vector<const Image2*> v;
    for (const auto& i : images) v.push_back(&i);
    return v;
  }
  std::vector<const Mask2*> mask_ptrs() const {
    std::vector<const Mask2*> v;
    for (const auto& m : masks) v.push_back(&m);
    return v;
  }
};

}  // namespace

TrainResult train(const SliceDataset& dataset, int fold, const FoldPlan& plan, const ModelConfig& model_config,
                  const TrainConfig& cfg, SliceSource& source, const TrainOptions& options) {
  cfg.validate();
  model_config.validate();
  if (dataset.empty()) throw InvalidArgument("empty dataset");
  if (fold < 0 || fold >= plan.k) throw InvalidArgument("fold " + std::to_string(fold) + " outside plan of k=" + std::to_string(plan.k));
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result{build_model(model_config, cfg.seed), {}, plan.training_scans(fold), plan.validation_scans(fold)};
  std::vector<SliceKey> train_keys, val_keys;
  for (const SliceKey& k : dataset.keys) {
    if (result.training_scans.count(k.scan_id)) train_keys.push_back(k);
    else if (result.validation_scans.count(k.scan_id)) val_keys.push_back(k);
  }
  if (train_keys.empty()) throw InvalidArgument("empty training split for fold " + std::to_string(fold));

  if (!options.run_dir.empty()) {
    fs::create_directories(options.run_dir);
    std::ofstream split(options.run_dir / "fold_split.json");
    split << json{{"fold", fold},
                  {"k", plan.k},
                  {"seed", plan.seed},
                  {"training_scans", result.training_scans},
                  {"validation_scans", result.validation_scans}}
                 .dump(2)
          << '\n';
  }

  SegmentationModel<float>& model = result.model;
  Trainer trainer(model, cfg);
  std::mt19937_64 order_rng(splitmix64(cfg.seed ^ 0x6f72646572ull));
  std::mt19937_64 flip_rng(splitmix64(cfg.seed ^ splitmix64(cfg.augment.seed)));
  Provenance prov{to_string(cfg.scenario), options.plane_label, fold, -1, 0.0, cfg.seed};
  TrainHistory& hist = result.history;
  ModelState best;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train_keys.begin(), train_keys.end(), order_rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < train_keys.size(); start += bs) {
      const std::size_t end = std::min(train_keys.size(), start + bs);
      Batch b;
      for (std::size_t i = start; i < end; ++i) {
        auto [img, msk] = train_transform(source.record(train_keys[i]), cfg.augment, flip_rng);
        b.images.push_back(std::move(img));
        b.masks.push_back(std::move(msk));
      }
      const double loss = trainer.step(b.image_ptrs(), b.mask_ptrs());
      if (!std::isfinite(loss)) {
        const std::vector<SliceKey> bad(train_keys.begin() + start, train_keys.begin() + end);
        if (!options.run_dir.empty()) {
          std::ofstream d(options.run_dir / "nonfinite_batch.json");
          d << json{{"epoch", epoch}, {"step", trainer.steps() + 1}, {"batch", keys_json(bad)}}.dump(2) << '\n';
        }
        throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epoch), bad);
      }
      train_sum += loss * static_cast<double>(end - start);
    }
    const double train_loss = train_sum / static_cast<double>(train_keys.size());

    double val_loss = train_loss;
    if (!val_keys.empty()) {
      double val_sum = 0.0;
      for (std::size_t start = 0; start < val_keys.size(); start += bs) {
        const std::size_t end = std::min(val_keys.size(), start + bs);
        Batch b;
        for (std::size_t i = start; i < end; ++i) {
          auto [img, msk] = eval_transform(source.record(val_keys[i]), cfg.augment);
          b.images.push_back(std::move(img));
          b.masks.push_back(std::move(msk));
        }
        val_sum += trainer.evaluate(b.image_ptrs(), b.mask_ptrs()) * static_cast<double>(end - start);
      }
      val_loss = val_sum / static_cast<double>(val_keys.size());
    }
    hist.train_loss.push_back(train_loss);
    hist.val_loss.push_back(val_loss);
    if (hist.best_epoch < 0 || val_loss < hist.best_val_loss) {
      hist.best_epoch = epoch;
      hist.best_val_loss = val_loss;
      best = snapshot(model);
      if (!options.run_dir.empty()) {
        prov.epoch = epoch;
        prov.val_loss = val_loss;
        save_checkpoint(model, prov, options.run_dir / "checkpoint.bin");
      }
    }
    if (!options.run_dir.empty()) write_history_csv(options.run_dir / "history.csv", hist);
    if (options.on_epoch) options.on_epoch(epoch, train_loss, val_loss);
  }
  restore(model, best);
  model.zero_grad();
  hist.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------

std::vector<Mask2> predict_slices(SegmentationModel<float>& model, const Volume& volume, PlaneAxis plane,
                                  const AugmentConfig& augment, double threshold, int batch_size) {
  augment.validate();
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  const int extent = volume.shape()[axis_of(plane)];
  const auto [rows, cols] = slice_shape(volume.shape(), plane);
  const float thr = static_cast<float>(threshold);
  std::vector<Mask2> out;
  out.reserve(static_cast<std::size_t>(extent));
  for (int start = 0; start < extent; start += batch_size) {
    const int end = std::min(extent, start + batch_size);
    std::vector<Image2> crops;
    for (int i = start; i < end; ++i) {
      crops.push_back(center_crop(resize2d(extract_slice(volume.voxels, plane, i), augment.resize_to, Resize2D::bilinear),
                                  augment.crop_to));
    }
    std::vector<const Image2*> ptrs;
    for (const auto& c : crops) ptrs.push_back(&c);
    const nn::FeatureMap<float> probs = model.forward(pack_batch<float>(ptrs, model.config().input_channels()), nn::Mode::eval);
    for (int n = 0; n < end - start; ++n) {
      const Image2 full = uncrop(unpack_sample(probs, n), augment.resize_to, augment.resize_to);
      const Image2 native = resize2d(full, rows, cols, Resize2D::nearest);
      out.push_back((native > thr).cast<std::uint8_t>());
    }
  }
  return out;
}

Mask3D stack_slices(const std::vector<Mask2>& masks, PlaneAxis plane) {
  if (masks.empty()) throw InvalidArgument("no slices to stack");
  const int rows = static_cast<int>(masks.front().rows());
  const int cols = static_cast<int>(masks.front().cols());
  const int n = static_cast<int>(masks.size());
  Shape3 shape;
  switch (plane) {
    case PlaneAxis::X_axial: shape = {n, rows, cols}; break;
    case PlaneAxis::Y_coronal: shape = {rows, n, cols}; break;
    case PlaneAxis::Z_sagittal: shape = {rows, cols, n}; break;
  }
  Mask3D out;
  out.source = MaskSource::predicted;
  out.voxels = make_mask_grid(shape);
  for (int i = 0; i < n; ++i) {
    if (masks[i].rows() != rows || masks[i].cols() != cols) {
      throw InvalidArgument("slice " + std::to_string(i) + " is " + std::to_string(masks[i].rows()) + "x" +
                            std::to_string(masks[i].cols()) + ", expected " + std::to_string(rows) + "x" +
                            std::to_string(cols));
    }
    if (((masks[i] != 0) && (masks[i] != 1)).any()) throw InvalidArgument("slice " + std::to_string(i) + " is not binary");
    insert_slice(out.voxels, plane, i, masks[i]);
  }
  return out;
}

Mask3D fuse_majority(const std::vector<Mask3D>& masks) {
  if (masks.empty() || masks.size() % 2 == 0) throw InvalidArgument("majority fusion needs an odd number of masks");
  const Shape3 s = masks.front().shape();
  Grid3<int> votes(s.nx, s.ny, s.nz);
  votes.setZero();
  for (const Mask3D& m : masks) {
    if (!(m.shape() == s)) throw InvalidArgument("masks to fuse differ in shape");
    votes += m.voxels.cast<int>();
  }
  Mask3D out;
  out.source = MaskSource::predicted;
  out.voxels = (votes * 2 > static_cast<int>(masks.size())).cast<std::uint8_t>();
  return out;
}

Mask3D NetworkPredictor::predict(const Volume& volume, PlaneAxis plane) {
  return stack_slices(predict_slices(model_, volume, plane, augment_, threshold_, batch_size_), plane);
}

Mask3D OraclePredictor::predict(const Volume& volume, PlaneAxis plane) {
  if (!(volume.shape() == truth_.shape())) throw InvalidArgument("oracle mask shape differs from the volume");
  const int extent = truth_.shape()[axis_of(plane)];
  std::vector<Mask2> slices;
  for (int i = 0; i < extent; ++i) slices.push_back(extract_slice(truth_.voxels, plane, i));
  return stack_slices(slices, plane);
}

ScanMetrics evaluate_plane(SlicePredictor& predictor, const Volume& volume, const Mask3D& gt, PlaneAxis plane,
                           int fold) {
  if (!(volume.shape() == gt.shape())) throw InvalidArgument("volume and ground truth differ in shape");
  const Mask3D pred = predictor.predict(volume, plane);
  if (!(pred.shape() == volume.shape())) throw InvalidArgument("prediction shape differs from the volume");
  ScanMetrics m = evaluate_masks(pred, gt, plane);
  m.patient_id = volume.patient_id;
  m.scan_id = volume.scan_id;
  m.fold = fold;
  return m;
}

std::vector<ScanMetrics> evaluate_scan(const ModelSet& models, const Volume& volume, const Mask3D& gt,
                                       Scenario scenario, int fold) {
  for (PlaneAxis p : kAllPlanes) {
    auto it = models.find(p);
    if (it == models.end() || it->second == nullptr) throw InvalidArgument("no model for plane " + plane_tag(p));
  }
  if (scenario == Scenario::all_planes) {
    const SlicePredictor* shared = models.at(PlaneAxis::X_axial);
    for (PlaneAxis p : kAllPlanes) {
      if (models.at(p) != shared) throw InvalidArgument("scenario all_planes evaluates one network on every plane");
    }
  }
  std::vector<ScanMetrics> out;
  for (PlaneAxis p : kAllPlanes) out.push_back(evaluate_plane(*models.at(p), volume, gt, p, fold));
  return out;
}

fs::path run_directory(const fs::path& root, Scenario scenario, const std::string& plane_label, int fold) {
  return root / to_string(scenario) / plane_label / ("fold" + std::to_string(fold));
}

}  // namespace planeseg
