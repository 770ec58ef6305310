// SPDX-License-Identifier: Apache-2.0

#include "planeseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "planeseg/loss.hpp"

namespace planeseg {

namespace {

void require_same_shape(const Mask3D& pred, const Mask3D& gt) {
  if (!(pred.shape() == gt.shape())) {
    throw InvalidArgument("prediction shape " + to_string(pred.shape()) + " differs from ground truth " +
                          to_string(gt.shape()));
  }
}

bool slice_has_foreground(const Mask3D& m, PlaneAxis plane, int i) {
  return (extract_slice(m.voxels, plane, i) != 0).any();
}

}  // namespace

MeanStd mean_std(const std::vector<double>& values, const std::vector<int>& indices) {
  MeanStd r;
  double sum = 0.0;
  auto visit = [&](auto&& f) {
    if (indices.empty()) {
      for (double v : values) f(v);
    } else {
      for (int i : indices) f(values.at(static_cast<std::size_t>(i)));
    }
  };
  visit([&](double v) {
    sum += v;
    ++r.count;
  });
  if (r.count == 0) return r;
  r.mean = sum / r.count;
  double ss = 0.0;
  visit([&](double v) { ss += (v - r.mean) * (v - r.mean); });
  r.std = std::sqrt(ss / r.count);
  return r;
}

std::string format_mean_std(const MeanStd& m, int decimals) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(decimals) << m.mean << " ± " << m.std;
  return os.str();
}

std::vector<double> per_slice_dsc(const Mask3D& pred, const Mask3D& gt, PlaneAxis plane) {
  require_same_shape(pred, gt);
  const int extent = gt.shape()[axis_of(plane)];
  std::vector<double> out(static_cast<std::size_t>(extent));
  for (int i = 0; i < extent; ++i) {
    out[i] = dice_coefficient(extract_slice(gt.voxels, plane, i), extract_slice(pred.voxels, plane, i), 1.0);
  }
  return out;
}

std::pair<int, int> foreground_extent(const Mask3D& gt, PlaneAxis plane) {
  const int extent = gt.shape()[axis_of(plane)];
  int lo = -1, hi = -1;
  for (int i = 0; i < extent; ++i) {
    if (!slice_has_foreground(gt, plane, i)) continue;
    if (lo < 0) lo = i;
    hi = i;
  }
  if (lo < 0) throw InvalidArgument("ground truth is empty along the " + plane_name(plane) + " axis");
  return {lo, hi};
}

std::vector<int> occupied_slices(const Mask3D& pred, const Mask3D& gt, PlaneAxis plane) {
  require_same_shape(pred, gt);
  std::vector<int> out;
  const int extent = gt.shape()[axis_of(plane)];
  for (int i = 0; i < extent; ++i) {
    if (slice_has_foreground(gt, plane, i) || slice_has_foreground(pred, plane, i)) out.push_back(i);
  }
  return out;
}

std::vector<int> mid_slice_indices(int lo, int hi, int n) {
  if (lo > hi || lo < 0) throw InvalidArgument("invalid foreground extent");
  if (n < 1) throw InvalidArgument("mid-slice count must be positive");
  const int c = (lo + hi) / 2;
  std::vector<int> out;
  for (int i = c - (n - 1) / 2; i <= c + n / 2; ++i) {
    if (i >= lo && i <= hi) out.push_back(i);
  }
  return out;
}

MidSliceStats mid_slice_stats(const std::vector<double>& per_slice, const Mask3D& gt, PlaneAxis plane, int n) {
  const int extent = gt.shape()[axis_of(plane)];
  if (static_cast<int>(per_slice.size()) != extent) {
    throw InvalidArgument("per-slice vector has " + std::to_string(per_slice.size()) + " entries, axis extent is " +
                          std::to_string(extent));
  }
  const auto [lo, hi] = foreground_extent(gt, plane);
  MidSliceStats r;
  r.indices = mid_slice_indices(lo, hi, n);
  r.stats = mean_std(per_slice, r.indices);
  return r;
}

std::vector<ThresholdHit> threshold_report(const std::vector<double>& per_slice, double tau,
                                           const std::vector<int>& mid_indices) {
  std::vector<ThresholdHit> out;
  for (std::size_t i = 0; i < per_slice.size(); ++i) {
    if (!(per_slice[i] < tau)) continue;
    const int idx = static_cast<int>(i);
    const bool mid = std::find(mid_indices.begin(), mid_indices.end(), idx) != mid_indices.end();
    out.push_back({idx, per_slice[i], mid});
  }
  return out;
}

namespace {

void summarize(ScanMetrics& m, const Mask3D* gt) {
  m.all_slices = mean_std(m.per_slice_dsc, m.evaluated);
  if (gt) {
    const auto [lo, hi] = foreground_extent(*gt, m.plane);
    m.mid_indices = mid_slice_indices(lo, hi, m.n_mid);
  }
  m.mid_slices = mean_std(m.per_slice_dsc, m.mid_indices);
  m.below_threshold = threshold_report(m.per_slice_dsc, kDscReference, m.mid_indices);
}

}  // namespace

ScanMetrics evaluate_masks(const Mask3D& pred, const Mask3D& gt, PlaneAxis plane, int n_mid) {
  ScanMetrics m;
  m.plane = plane;
  m.n_mid = n_mid;
  m.per_slice_dsc = per_slice_dsc(pred, gt, plane);
  m.evaluated = occupied_slices(pred, gt, plane);
  summarize(m, &gt);
  return m;
}

ScanMetrics aggregate_folds(const std::vector<ScanMetrics>& folds) {
  if (folds.empty()) throw InvalidArgument("no fold metrics to aggregate");
  const ScanMetrics& first = folds.front();
  ScanMetrics out;
  out.patient_id = first.patient_id;
  out.scan_id = first.scan_id;
  out.plane = first.plane;
  out.n_mid = first.n_mid;
  out.fold = kAverageFold;
  out.mid_indices = first.mid_indices;
  out.per_slice_dsc.assign(first.per_slice_dsc.size(), 0.0);
  std::vector<char> used(first.per_slice_dsc.size(), 0);
  for (const ScanMetrics& f : folds) {
    if (f.scan_id != first.scan_id || f.plane != first.plane || f.per_slice_dsc.size() != first.per_slice_dsc.size() ||
        f.mid_indices != first.mid_indices) {
      throw InvalidArgument("fold metrics disagree on scan, plane or slice count");
    }
    for (std::size_t i = 0; i < f.per_slice_dsc.size(); ++i) out.per_slice_dsc[i] += f.per_slice_dsc[i];
    for (int i : f.evaluated) used.at(static_cast<std::size_t>(i)) = 1;
  }
  for (double& v : out.per_slice_dsc) v /= static_cast<double>(folds.size());
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (used[i]) out.evaluated.push_back(static_cast<int>(i));
  }
  summarize(out, nullptr);
  return out;
}

std::string fold_label(int fold) { return fold == kAverageFold ? "avg" : std::to_string(fold); }

int fold_from_label(const std::string& s) {
  if (s == "avg") return kAverageFold;
  std::size_t used = 0;
  int f = -1;
  try {
    f = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || f < 0) throw InvalidArgument("invalid fold label '" + s + "'");
  return f;
}

void write_metrics_rows(std::ostream& out, const ScanMetrics& m) {
  char buf[32];
  for (std::size_t i = 0; i < m.per_slice_dsc.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", m.per_slice_dsc[i]);
    out << m.scan_id << ',' << plane_tag(m.plane) << ',' << fold_label(m.fold) << ',' << i << ',' << buf << '\n';
  }
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<ScanMetrics>& metrics) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMetricsCsvHeader << '\n';
  for (const ScanMetrics& m : metrics) write_metrics_rows(out, m);
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader) {
    throw IoError(path.string() + ": expected header '" + kMetricsCsvHeader + "'");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw IoError(path.string() + ": malformed row '" + line + "'");
    try {
      rows.push_back({f[0], plane_from_string(f[1]), fold_from_label(f[2]), std::stoi(f[3]), std::stod(f[4])});
    } catch (const std::exception& e) {
      throw IoError(path.string() + ": malformed row '" + line + "': " + e.what());
    }
  }
  return rows;
}

}  // namespace planeseg
