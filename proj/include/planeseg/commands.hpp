// SPDX-License-Identifier: Apache-2.0
//
// The four pipeline commands (phantom, train, evaluate, report) as library
// calls. The command-line tool only parses arguments into these structs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "planeseg/config.hpp"
#include "planeseg/report.hpp"

namespace planeseg {

/// "0..4", "1,3" or "2".
std::vector<int> parse_fold_list(const std::string& s);
/// "2,5,3"
std::vector<int> parse_int_list(const std::string& s);
/// "X", "Y", "Z" or "all-three".
std::vector<PlaneAxis> parse_plane_option(const std::string& s);

struct PhantomCommand {
  int patients = 11;
  std::vector<int> scans{2, 5, 3, 4, 5, 4, 5, 3, 5, 1, 1};
  std::uint64_t seed = 7;
  std::filesystem::path out;
  std::set<std::string> test_patients = default_test_patients();
  PhantomConfig config;
};

/// Returns the manifest checksum.
std::uint64_t run_phantom(const PhantomCommand& cmd, std::ostream& log);

struct TrainCommand {
  std::filesystem::path manifest;
  std::filesystem::path runs_dir = "runs";
  Scenario scenario = Scenario::per_plane;
  std::vector<PlaneAxis> planes{PlaneAxis::X_axial};
  std::vector<int> folds{0, 1, 2, 3, 4};
  int k = 5;
  /// Seeds the fold assignment.
  std::uint64_t fold_seed = 0;
  ModelConfig model;
  TrainConfig train;
};

struct TrainRun {
  std::string network;
  int fold = 0;
  std::filesystem::path run_dir;
  TrainHistory history;
};

/// Trains every requested (network, fold) pair. Per-plane runs train one
/// network per plane, all-planes runs one network per fold.
std::vector<TrainRun> run_train(const TrainCommand& cmd, std::ostream& log);

struct EvaluateCommand {
  std::filesystem::path manifest;
  std::filesystem::path runs_dir = "runs";
  std::filesystem::path out = "metrics";
  Scenario scenario = Scenario::per_plane;
  std::vector<PlaneAxis> planes{PlaneAxis::X_axial};
  std::vector<int> folds{0, 1, 2, 3, 4};
  /// Replay the ground truth instead of loading checkpoints.
  bool oracle = false;
  int batch_size = 8;
};

/// Evaluates the test-role scans; returns every written record.
std::vector<NetworkMetrics> run_evaluate(const EvaluateCommand& cmd, std::ostream& log);

}  // namespace planeseg
