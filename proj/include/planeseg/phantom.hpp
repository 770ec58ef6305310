// SPDX-License-Identifier: Apache-2.0
//
// Synthetic ultrasound-like pelvis volumes with a known uterus mask.
//
// Uterus: an ellipsoid whose long axis is bent by a quadratic shear
//   inside(u, v, w) = (u/a)^2 + ((v - bend * u^2 / a) / b)^2 + (w/c)^2 <= 1
// in a rotated, translated local frame. The shear has unit Jacobian, so the
// region keeps the ellipsoid volume 4/3 pi a b c. A second ellipsoid on the
// probe side plays the bladder. Intensities are piecewise constant, then
// multiplied by unit-mean log-normal speckle, attenuated with depth along y,
// blurred along the elevational axis and rescaled to [0, 1].

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "planeseg/dataset.hpp"
#include "planeseg/grid.hpp"

namespace planeseg {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct PhantomConfig {
  Shape3 shape{128, 128, 128};
  /// Uterus semi-axes as fractions of the smallest volume extent.
  Range uterus_semi_axes{0.10, 0.22};
  /// Per-scan relative jitter of a patient's semi-axes.
  double semi_axis_jitter = 0.03;
  /// Maximum absolute rotation per axis, degrees.
  double max_rotation_deg = 25.0;
  /// Maximum centre offset per axis, as a fraction of the extent.
  double max_translation = 0.08;
  /// Signed quadratic bend; negative values bend the other way.
  Range bend{0.15, 0.5};
  Range bladder_semi_axes{0.08, 0.16};
  double uterus_intensity = 0.72;
  double endometrium_intensity = 0.9;
  double background_intensity = 0.42;
  double bladder_intensity = 0.06;
  double speckle_sigma = 0.35;
  double elevational_blur_sigma = 1.5;
  /// Volume axis (0, 1, 2) that receives the elevational blur.
  int elevational_axis = 2;
  /// Attenuation per voxel of depth along y: exp(-coeff * y).
  double attenuation_coeff = 0.004;
  int margin = 2;
  int max_retries = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Sampled anatomy and pose of one scan, in voxel units.
struct PhantomGeometry {
  std::array<double, 3> uterus_semi_axes{};
  std::array<double, 3> uterus_center{};
  std::array<double, 3> rotation_deg{};
  double bend = 0.0;
  std::array<double, 3> bladder_semi_axes{};
  std::array<double, 3> bladder_center{};

  /// Analytic uterus volume in voxels.
  double uterus_volume() const;
};

struct Phantom {
  Volume volume;
  Mask3D mask;
  PhantomGeometry geometry;
};

/// Deterministic in (config, seed). Throws when no pose fits the margins.
Phantom generate_phantom(const PhantomConfig& config, std::uint64_t seed);

/// As above with the uterus semi-axes fixed up to the per-scan jitter.
Phantom generate_phantom(const PhantomConfig& config, std::uint64_t seed,
                         const std::array<double, 3>& base_semi_axes);

/// Rasterizes the uterus of `g` into a binary grid.
Grid3<std::uint8_t> rasterize_uterus(const Shape3& shape, const PhantomGeometry& g);

/// Writes the raw image/mask pairs, `manifest.json` and `phantom.config.json`
/// under `out_dir`. Patients are numbered 1..n, scans 1..m per patient.
DatasetManifest generate_cohort(int n_patients, const std::vector<int>& scans_per_patient,
                                const PhantomConfig& config, std::uint64_t seed,
                                const std::filesystem::path& out_dir,
                                const std::set<std::string>& test_patients = default_test_patients());

/// FNV-1a 64-bit over the bytes of a file.
std::uint64_t file_checksum(const std::filesystem::path& path);

/// Stable checksum of a cohort: the manifest plus every referenced file.
std::uint64_t manifest_checksum(const std::filesystem::path& manifest_path);

}  // namespace planeseg
