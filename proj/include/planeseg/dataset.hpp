// SPDX-License-Identifier: Apache-2.0
//
// Patient/scan registry, plane slicing and cross-validation planning.
//
// In-plane orientation is fixed here and used everywhere else:
//   X_axial    slice at x = i is the (y, z) grid
//   Y_coronal  slice at y = i is the (x, z) grid
//   Z_sagittal slice at z = i is the (x, y) grid

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "planeseg/grid.hpp"

namespace planeseg {

enum class PlaneAxis { X_axial = 0, Y_coronal = 1, Z_sagittal = 2 };

inline constexpr std::array<PlaneAxis, 3> kAllPlanes{PlaneAxis::X_axial, PlaneAxis::Y_coronal,
                                                     PlaneAxis::Z_sagittal};

/// Volume axis orthogonal to the plane.
constexpr int axis_of(PlaneAxis p) { return static_cast<int>(p); }

/// Short tag: "X", "Y", "Z".
std::string plane_tag(PlaneAxis p);
/// Anatomical name: "Axial", "Coronal", "Sagittal".
std::string plane_name(PlaneAxis p);
PlaneAxis plane_from_string(const std::string& s);

/// In-plane (rows, cols) of a slice cut from a volume of `shape`.
std::pair<int, int> slice_shape(const Shape3& shape, PlaneAxis plane);

template <typename Scalar>
Grid2<Scalar> extract_slice(const Grid3<Scalar>& grid, PlaneAxis plane, int index) {
  const Shape3 s = shape_of(grid);
  const int extent = s[axis_of(plane)];
  if (index < 0 || index >= extent) {
    throw InvalidArgument("slice index " + std::to_string(index) + " out of range [0," +
                          std::to_string(extent) + ") for plane " + plane_tag(plane));
  }
  const auto [rows, cols] = slice_shape(s, plane);
  Grid2<Scalar> out(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      switch (plane) {
        case PlaneAxis::X_axial: out(r, c) = grid(index, r, c); break;
        case PlaneAxis::Y_coronal: out(r, c) = grid(r, index, c); break;
        case PlaneAxis::Z_sagittal: out(r, c) = grid(r, c, index); break;
      }
    }
  }
  return out;
}

template <typename Scalar>
void insert_slice(Grid3<Scalar>& grid, PlaneAxis plane, int index, const Grid2<Scalar>& slice) {
  const Shape3 s = shape_of(grid);
  const auto [rows, cols] = slice_shape(s, plane);
  if (slice.rows() != rows || slice.cols() != cols) {
    throw InvalidArgument("slice shape does not match volume for plane " + plane_tag(plane));
  }
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      switch (plane) {
        case PlaneAxis::X_axial: grid(index, r, c) = slice(r, c); break;
        case PlaneAxis::Y_coronal: grid(r, index, c) = slice(r, c); break;
        case PlaneAxis::Z_sagittal: grid(r, c, index) = slice(r, c); break;
      }
    }
  }
}

struct SliceRecord {
  std::string scan_id;
  PlaneAxis plane = PlaneAxis::X_axial;
  int index = 0;
  Image2 image;
  Mask2 mask;
};

SliceRecord extract_plane(const Volume& volume, const Mask3D& mask, PlaneAxis plane, int index);

/// One record per index along the plane's axis, ascending.
std::vector<SliceRecord> slice_volume(const Volume& volume, const Mask3D& mask, PlaneAxis plane);

// ---------------------------------------------------------------------------

enum class Role { train, test };
std::string to_string(Role r);
Role role_from_string(const std::string& s);

struct ManifestEntry {
  std::string patient_id;
  std::string scan_id;
  std::filesystem::path volume_path;
  std::filesystem::path mask_path;
  Role role = Role::train;
};

/// Scan registry. Relative entry paths resolve against `base_dir`.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::vector<const ManifestEntry*> with_role(Role r) const;
  const ManifestEntry& find(const std::string& scan_id) const;

  /// Throws unless scan ids are unique and every patient has one role.
  void validate() const;
};

/// Scans `root` recursively for `<patient>_<scan>` image/mask pairs.
DatasetManifest build_manifest(const std::filesystem::path& root,
                               const std::set<std::string>& test_patients);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Returns the default test patients {1, 10}.
std::set<std::string> default_test_patients();

// ---------------------------------------------------------------------------

struct SliceKey {
  std::string scan_id;
  PlaneAxis plane = PlaneAxis::X_axial;
  int index = 0;

  friend auto operator<=>(const SliceKey&, const SliceKey&) = default;
};

/// Lazy slice dataset: keys only, pixels are cut from volumes on demand.
struct SliceDataset {
  std::vector<SliceKey> keys;

  std::size_t size() const { return keys.size(); }
  bool empty() const { return keys.empty(); }
  std::set<std::string> scan_ids() const;
};

struct ScenarioOptions {
  /// Slices whose mask has fewer foreground pixels are dropped. 0 keeps all.
  int min_foreground_px = 0;
};

/// Per-plane datasets built from train-role scans only.
std::map<PlaneAxis, SliceDataset> build_scenario1(const DatasetManifest& manifest,
                                                  const ScenarioOptions& options = {});

/// Union of the three per-plane datasets; every key keeps its plane.
SliceDataset build_scenario2(const DatasetManifest& manifest, const ScenarioOptions& options = {});

// ---------------------------------------------------------------------------

struct FoldPlan {
  int k = 5;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignments;

  std::set<std::string> validation_scans(int fold) const;
  std::set<std::string> training_scans(int fold) const;
  std::vector<int> fold_sizes() const;
};

/// Seeded, shuffled, scan-level k-fold assignment over train-role scans.
FoldPlan make_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

void save_fold_plan(const FoldPlan& plan, const std::filesystem::path& path);
FoldPlan load_fold_plan(const std::filesystem::path& path);

}  // namespace planeseg
