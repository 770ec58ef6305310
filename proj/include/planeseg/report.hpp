// SPDX-License-Identifier: Apache-2.0
//
// Evaluation outputs and rendered result artifacts.
//
// Metrics directory (written by evaluation, read by the report):
//   <scenario>/summary.json                   per-fold and fold-averaged summaries
//   <scenario>/<network>/per_slice.csv        scan_id,plane,fold,slice_index,dsc
//   <scenario>/<network>/history_fold<k>.csv  epoch,train_loss,val_loss
//
// Report directory:
//   tables.md                                 All slices / 4 mid-slices tables
//   dsc_distribution.csv                      per-slice DSC series per fold plus avg
//   dsc_distribution.meta.json                series names and the 0.7 reference level
//   <scenario>/<network>/history_fold<k>.csv  loss curves

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "planeseg/metrics.hpp"
#include "planeseg/pipeline.hpp"

namespace planeseg {

/// "net_X", "net_Y", "net_Z" for per-plane runs, "net_all" otherwise.
std::string network_name(Scenario scenario, PlaneAxis plane);
/// Run-directory label: "X" / "Y" / "Z" or "all".
std::string network_dir(Scenario scenario, PlaneAxis plane);

/// Evaluation records of one network: every fold plus the fold average.
struct NetworkMetrics {
  Scenario scenario = Scenario::per_plane;
  std::string network;
  std::vector<ScanMetrics> records;
  std::vector<std::pair<int, TrainHistory>> histories;
};

/// Writes per_slice.csv, the history copies and merges the summaries into
/// <scenario>/summary.json.
void write_network_metrics(const std::filesystem::path& metrics_dir, const NetworkMetrics& m);

struct SummaryRecord {
  std::string network;
  std::string patient_id;
  std::string scan_id;
  PlaneAxis plane = PlaneAxis::X_axial;
  int fold = kAverageFold;
  MeanStd all_slices;
  MeanStd mid_slices;
};

std::vector<SummaryRecord> read_summary(const std::filesystem::path& summary_json);

/// Markdown tables for one scenario. Scenario 1 has
/// columns net_X / net_Y / net_Z, scenario 2 Axial / Coronal / Sagittal, with
/// one row per (patient, scan) and an "All slices" and a "4 mid-slices" block.
std::string render_tables(Scenario scenario, const std::vector<SummaryRecord>& records);

/// Renders every artifact of the report directory. Throws when the metrics
/// directory holds no evaluation output.
void write_report(const std::filesystem::path& metrics_dir, const std::filesystem::path& out_dir);

}  // namespace planeseg
