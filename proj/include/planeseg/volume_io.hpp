// SPDX-License-Identifier: Apache-2.0
//
// Volume and mask persistence, intensity normalization and resampling.
//
// Two on-disk formats are supported:
//   * raw: `<stem>.raw` holding little-endian float32 (image) or uint8 (mask),
//     x-fastest, next to a `<stem>.json` sidecar with the keys `shape`,
//     `spacing_mm`, `patient_id`, `scan_id`, `source` (and optional `dtype`).
//   * NIfTI-1 single file `.nii` / `.nii.gz`.
// A mask pairs with its image through the `_mask` stem suffix.

#pragma once

#include <filesystem>
#include <optional>
#include <utility>

#include "planeseg/grid.hpp"

namespace planeseg {

enum class VolumeFormat { raw, nifti, nifti_gz };

enum class Interpolation { linear, nearest };

/// Header-only view of a stored volume, cheap to read for large scans.
struct VolumeHeader {
  Shape3 shape;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::string patient_id;
  std::string scan_id;
  VolumeFormat format = VolumeFormat::raw;
};

VolumeFormat detect_format(const std::filesystem::path& path);

/// Stem of `path` without format extensions (`a/b_1.nii.gz` -> `b_1`).
std::string volume_stem(const std::filesystem::path& path);

/// Path of the `_mask` sibling of an image path, in the same format.
std::filesystem::path mask_path_for(const std::filesystem::path& image_path);

VolumeHeader read_header(const std::filesystem::path& path);

/// Loads an image and, when a `_mask` sibling exists, its paired mask.
std::pair<Volume, std::optional<Mask3D>> load_volume(const std::filesystem::path& path);

/// Loads the image only; intensities are returned as stored.
Volume load_image(const std::filesystem::path& path);

/// Loads a mask file; rejects any value outside {0, 1}.
Mask3D load_mask(const std::filesystem::path& path);

void save_volume(const Volume& volume, const std::filesystem::path& path);

/// Writes `mask` in the format selected by the extension of `path`.
/// `patient_id` / `scan_id` go into the sidecar for raw files.
void save_mask(const Mask3D& mask, const std::filesystem::path& path,
               const std::string& patient_id = {}, const std::string& scan_id = {});

/// Linear min/max rescale to [0, 1]. Constant volumes map to all zeros.
Volume normalize(const Volume& volume);

/// Resamples to `target` with half-pixel-centred sampling. Coordinates are
/// clamped to the source grid, so linear interpolation never leaves the
/// input's value range and nearest mode only copies existing values.
Grid3<float> resample(const Grid3<float>& grid, const Shape3& target, Interpolation mode);
Grid3<std::uint8_t> resample_nearest(const Grid3<std::uint8_t>& grid, const Shape3& target);

Volume resample(const Volume& volume, const Shape3& target,
                Interpolation mode = Interpolation::linear);
Mask3D resample(const Mask3D& mask, const Shape3& target);

/// Nearest source index for destination index `dst` along an axis.
inline int nearest_source_index(int dst, int src_extent, int dst_extent) {
  const double s = (dst + 0.5) * static_cast<double>(src_extent) / dst_extent;
  const int i = static_cast<int>(s);
  return i < src_extent ? i : src_extent - 1;
}

void require_binary(const Grid3<std::uint8_t>& voxels);

}  // namespace planeseg
