// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration. One document with an optional block per module:
//   {"phantom": {...}, "augment": {...}, "model": {...}, "train": {...},
//    "loss": {...}, "paths": {...}, "test_patients": [...], "folds": 5}
// Missing keys keep their defaults; unknown keys are rejected.

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "planeseg/augment.hpp"
#include "planeseg/checkpoint.hpp"
#include "planeseg/loss.hpp"
#include "planeseg/network.hpp"
#include "planeseg/phantom.hpp"
#include "planeseg/pipeline.hpp"

namespace planeseg {

void to_json(nlohmann::json& j, const Shape3& s);
void from_json(const nlohmann::json& j, Shape3& s);
void to_json(nlohmann::json& j, const Range& r);
void from_json(const nlohmann::json& j, Range& r);
void to_json(nlohmann::json& j, const PhantomConfig& c);
void from_json(const nlohmann::json& j, PhantomConfig& c);
void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);
void to_json(nlohmann::json& j, const MeanStd& m);
void to_json(nlohmann::json& j, const ScanMetrics& m);

struct RunPaths {
  std::filesystem::path data_dir = "data";
  std::filesystem::path runs_dir = "runs";
  std::filesystem::path metrics_dir = "metrics";
  std::filesystem::path report_dir = "report";
};

struct RunConfig {
  std::optional<PhantomConfig> phantom;
  ModelConfig model;
  /// Carries the augment and loss blocks.
  TrainConfig train;
  RunPaths paths;
  std::set<std::string> test_patients = default_test_patients();
  int folds = 5;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Reads and validates a run configuration.
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

}  // namespace planeseg
