// SPDX-License-Identifier: Apache-2.0

#include "planeseg/config.hpp"

#include <fstream>

namespace planeseg {

using nlohmann::json;

namespace {

// Reads optional keys of one block and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string block) : j_(j), block_(std::move(block)) {
    if (!j_.is_object()) throw InvalidArgument("'" + block_ + "' must be a JSON object");
  }

  template <typename T>
  Fields& get(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->template get<T>();
      } catch (const json::exception& e) {
        throw InvalidArgument(block_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw InvalidArgument("unknown key '" + k + "' in '" + block_ + "'");
    }
  }

 private:
  const json& j_;
  std::string block_;
  std::set<std::string> seen_;
};

}  // namespace

void to_json(json& j, const Shape3& s) { j = json::array({s.nx, s.ny, s.nz}); }

void from_json(const json& j, Shape3& s) {
  if (!j.is_array() || j.size() != 3) throw InvalidArgument("shape must be an array of three integers");
  s = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

void to_json(json& j, const Range& r) { j = json::array({r.lo, r.hi}); }

void from_json(const json& j, Range& r) {
  if (!j.is_array() || j.size() != 2) throw InvalidArgument("range must be an array [lo, hi]");
  r = {j[0].get<double>(), j[1].get<double>()};
}

void to_json(json& j, const PhantomConfig& c) {
  j = {{"shape", c.shape},
       {"uterus_semi_axes", c.uterus_semi_axes},
       {"semi_axis_jitter", c.semi_axis_jitter},
       {"max_rotation_deg", c.max_rotation_deg},
       {"max_translation", c.max_translation},
       {"bend", c.bend},
       {"bladder_semi_axes", c.bladder_semi_axes},
       {"uterus_intensity", c.uterus_intensity},
       {"endometrium_intensity", c.endometrium_intensity},
       {"background_intensity", c.background_intensity},
       {"bladder_intensity", c.bladder_intensity},
       {"speckle_sigma", c.speckle_sigma},
       {"elevational_blur_sigma", c.elevational_blur_sigma},
       {"elevational_axis", c.elevational_axis},
       {"attenuation_coeff", c.attenuation_coeff},
       {"margin", c.margin},
       {"max_retries", c.max_retries},
       {"seed", c.seed}};
}

void from_json(const json& j, PhantomConfig& c) {
  Fields(j, "phantom")
      .get("shape", c.shape)
      .get("uterus_semi_axes", c.uterus_semi_axes)
      .get("semi_axis_jitter", c.semi_axis_jitter)
      .get("max_rotation_deg", c.max_rotation_deg)
      .get("max_translation", c.max_translation)
      .get("bend", c.bend)
      .get("bladder_semi_axes", c.bladder_semi_axes)
      .get("uterus_intensity", c.uterus_intensity)
      .get("endometrium_intensity", c.endometrium_intensity)
      .get("background_intensity", c.background_intensity)
      .get("bladder_intensity", c.bladder_intensity)
      .get("speckle_sigma", c.speckle_sigma)
      .get("elevational_blur_sigma", c.elevational_blur_sigma)
      .get("elevational_axis", c.elevational_axis)
      .get("attenuation_coeff", c.attenuation_coeff)
      .get("margin", c.margin)
      .get("max_retries", c.max_retries)
      .get("seed", c.seed)
      .finish();
}

void to_json(json& j, const AugmentConfig& c) {
  j = {{"resize_to", c.resize_to}, {"crop_to", c.crop_to}, {"p_hflip", c.p_hflip}, {"p_vflip", c.p_vflip},
       {"seed", c.seed}};
}

void from_json(const json& j, AugmentConfig& c) {
  Fields(j, "augment")
      .get("resize_to", c.resize_to)
      .get("crop_to", c.crop_to)
      .get("p_hflip", c.p_hflip)
      .get("p_vflip", c.p_vflip)
      .get("seed", c.seed)
      .finish();
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"width_mult", c.width_mult},
       {"decoder_channels", c.decoder_channels},
       {"output_channels", c.output_channels},
       {"batch_norm", c.batch_norm},
       {"decoder_batch_norm", c.decoder_batch_norm},
       {"replicate_to_3ch", c.replicate_to_3ch}};
}

void from_json(const json& j, ModelConfig& c) {
  Fields(j, "model")
      .get("in_channels", c.in_channels)
      .get("width_mult", c.width_mult)
      .get("decoder_channels", c.decoder_channels)
      .get("output_channels", c.output_channels)
      .get("batch_norm", c.batch_norm)
      .get("decoder_batch_norm", c.decoder_batch_norm)
      .get("replicate_to_3ch", c.replicate_to_3ch)
      .finish();
}

void to_json(json& j, const LossConfig& c) {
  j = {{"dice_weight", c.dice_weight}, {"ep", c.ep}, {"probability_clamp", c.probability_clamp}};
}

void from_json(const json& j, LossConfig& c) {
  Fields(j, "loss").get("dice_weight", c.dice_weight).get("ep", c.ep).get("probability_clamp", c.probability_clamp).finish();
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"weight_decay", c.weight_decay},
       {"decoupled_weight_decay", c.decoupled_weight_decay},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"scenario", to_string(c.scenario)},
       {"threshold", c.threshold},
       {"min_foreground_px", c.min_foreground_px}};
}

void from_json(const json& j, TrainConfig& c) {
  std::string scenario = to_string(c.scenario);
  Fields(j, "train")
      .get("epochs", c.epochs)
      .get("learning_rate", c.learning_rate)
      .get("weight_decay", c.weight_decay)
      .get("decoupled_weight_decay", c.decoupled_weight_decay)
      .get("batch_size", c.batch_size)
      .get("seed", c.seed)
      .get("scenario", scenario)
      .get("threshold", c.threshold)
      .get("min_foreground_px", c.min_foreground_px)
      .finish();
  c.scenario = scenario_from_string(scenario);
}

void to_json(json& j, const Provenance& p) {
  j = {{"scenario", p.scenario}, {"plane", p.plane},       {"fold", p.fold},
       {"epoch", p.epoch},       {"val_loss", p.val_loss}, {"seed", p.seed}};
}

void from_json(const json& j, Provenance& p) {
  Fields(j, "provenance")
      .get("scenario", p.scenario)
      .get("plane", p.plane)
      .get("fold", p.fold)
      .get("epoch", p.epoch)
      .get("val_loss", p.val_loss)
      .get("seed", p.seed)
      .finish();
}

void to_json(json& j, const MeanStd& m) { j = {{"mean", m.mean}, {"std", m.std}, {"count", m.count}}; }

void to_json(json& j, const ScanMetrics& m) {
  json below = json::array();
  for (const auto& h : m.below_threshold) below.push_back({{"slice_index", h.index}, {"dsc", h.dsc}, {"mid", h.mid}});
  j = {{"patient_id", m.patient_id},
       {"scan_id", m.scan_id},
       {"plane", plane_tag(m.plane)},
       {"fold", fold_label(m.fold)},
       {"all_slices", m.all_slices},
       {"mid_slices", m.mid_slices},
       {"mid_indices", m.mid_indices},
       {"n_mid", m.n_mid},
       {"threshold", kDscReference},
       {"below_threshold", below}};
}

void RunConfig::validate() const {
  if (phantom) phantom->validate();
  model.validate();
  train.validate();
  if (folds < 2) throw InvalidArgument("folds must be at least 2");
}

void to_json(json& j, const RunConfig& c) {
  json train = c.train;
  j = {{"model", c.model},
       {"train", train},
       {"augment", c.train.augment},
       {"loss", c.train.loss},
       {"paths",
        {{"data_dir", c.paths.data_dir.string()},
         {"runs_dir", c.paths.runs_dir.string()},
         {"metrics_dir", c.paths.metrics_dir.string()},
         {"report_dir", c.paths.report_dir.string()}}},
       {"test_patients", c.test_patients},
       {"folds", c.folds}};
  if (c.phantom) j["phantom"] = *c.phantom;
}

void from_json(const json& j, RunConfig& c) {
  json phantom, paths;
  Fields top(j, "config");
  top.get("model", c.model)
      .get("train", c.train)
      .get("augment", c.train.augment)
      .get("loss", c.train.loss)
      .get("test_patients", c.test_patients)
      .get("folds", c.folds)
      .get("phantom", phantom)
      .get("paths", paths)
      .finish();
  if (!phantom.is_null()) c.phantom = phantom.get<PhantomConfig>();
  if (!paths.is_null()) {
    std::string data = c.paths.data_dir.string(), runs = c.paths.runs_dir.string();
    std::string metrics = c.paths.metrics_dir.string(), report = c.paths.report_dir.string();
    Fields(paths, "paths")
        .get("data_dir", data)
        .get("runs_dir", runs)
        .get("metrics_dir", metrics)
        .get("report_dir", report)
        .finish();
    c.paths = {data, runs, metrics, report};
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InvalidArgument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  c.validate();
  return c;
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << json(config).dump(2) << '\n';
}

}  // namespace planeseg
