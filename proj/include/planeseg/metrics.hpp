// SPDX-License-Identifier: Apache-2.0
//
// Per-slice Dice evaluation of stacked 3D predictions.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "planeseg/dataset.hpp"
#include "planeseg/grid.hpp"

namespace planeseg {

struct MeanStd {
  double mean = 0.0;
  /// Population standard deviation.
  double std = 0.0;
  int count = 0;
};

/// Mean and population std of `values` at `indices` (all entries when `indices` is empty).
MeanStd mean_std(const std::vector<double>& values, const std::vector<int>& indices = {});

/// "0.48 ± 0.24"
std::string format_mean_std(const MeanStd& m, int decimals = 2);

inline constexpr double kDscReference = 0.7;
inline constexpr int kMidSlices = 4;
/// Fold label used for fold-averaged records.
inline constexpr int kAverageFold = -1;

struct ThresholdHit {
  int index = 0;
  double dsc = 0.0;
  /// Inside the mid-slice window.
  bool mid = false;

  friend bool operator==(const ThresholdHit&, const ThresholdHit&) = default;
};

struct ScanMetrics {
  std::string patient_id;
  std::string scan_id;
  PlaneAxis plane = PlaneAxis::X_axial;
  int fold = kAverageFold;
  /// Hard Dice (ep = 1) per slice index along the plane axis.
  std::vector<double> per_slice_dsc;
  /// Slices where the ground truth or the prediction has foreground.
  std::vector<int> evaluated;
  MeanStd all_slices;
  std::vector<int> mid_indices;
  MeanStd mid_slices;
  int n_mid = kMidSlices;
  std::vector<ThresholdHit> below_threshold;
};

/// Hard Dice of each slice pair along the plane's axis.
std::vector<double> per_slice_dsc(const Mask3D& pred, const Mask3D& gt, PlaneAxis plane);

/// First and last slice index along the plane's axis with ground-truth foreground.
std::pair<int, int> foreground_extent(const Mask3D& gt, PlaneAxis plane);

/// Slice indices along the plane's axis where either mask has foreground.
std::vector<int> occupied_slices(const Mask3D& pred, const Mask3D& gt, PlaneAxis plane);

/// Mid-slice window of `n` slices centred on c = floor((lo + hi) / 2) of the
/// ground-truth extent [lo, hi]: {c - (n-1)/2, ..., c + n/2}, clipped to [lo, hi].
std::vector<int> mid_slice_indices(int lo, int hi, int n = kMidSlices);

struct MidSliceStats {
  MeanStd stats;
  std::vector<int> indices;
};

MidSliceStats mid_slice_stats(const std::vector<double>& per_slice, const Mask3D& gt, PlaneAxis plane,
                              int n = kMidSlices);

/// Indices with DSC < tau; `mid` marks those inside `mid_indices`.
std::vector<ThresholdHit> threshold_report(const std::vector<double>& per_slice, double tau = kDscReference,
                                           const std::vector<int>& mid_indices = {});

/// Full per-plane evaluation of one scan.
ScanMetrics evaluate_masks(const Mask3D& pred, const Mask3D& gt, PlaneAxis plane, int n_mid = kMidSlices);

/// Per-slice mean over folds with summary statistics recomputed. Inputs
/// must agree on scan, plane and slice count.
ScanMetrics aggregate_folds(const std::vector<ScanMetrics>& folds);

inline constexpr const char* kMetricsCsvHeader = "scan_id,plane,fold,slice_index,dsc";

std::string fold_label(int fold);
int fold_from_label(const std::string& s);

/// Appends one row per slice (no header).
void write_metrics_rows(std::ostream& out, const ScanMetrics& m);
void write_metrics_csv(const std::filesystem::path& path, const std::vector<ScanMetrics>& metrics);

/// Rows of a metrics CSV, grouped back into per-(scan, plane, fold) vectors.
struct MetricsRow {
  std::string scan_id;
  PlaneAxis plane = PlaneAxis::X_axial;
  int fold = kAverageFold;
  int slice_index = 0;
  double dsc = 0.0;
};
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace planeseg
