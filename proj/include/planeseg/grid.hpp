// SPDX-License-Identifier: Apache-2.0
//
// Dense grid types shared by every stage of the pipeline.
//
// Volumes are stored x-fastest (Eigen column-major tensors), so voxel (x, y, z)
// lives at x + nx * (y + ny * z). 2D slices are column-major Eigen arrays with
// (row, col) = first and second in-plane axis.

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/CXX11/Tensor>

namespace planeseg {

/// SplitMix64 finalizer; derives independent seeds from one user seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

template <typename Scalar>
using Grid3 = Eigen::Tensor<Scalar, 3, Eigen::ColMajor>;

template <typename Scalar>
using Grid2 = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Image2 = Grid2<float>;
using Mask2 = Grid2<std::uint8_t>;

struct Shape3 {
  int nx = 0;
  int ny = 0;
  int nz = 0;

  int operator[](int axis) const { return axis == 0 ? nx : (axis == 1 ? ny : nz); }
  std::int64_t voxels() const { return std::int64_t{nx} * ny * nz; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& s);

template <typename Scalar>
Shape3 shape_of(const Grid3<Scalar>& g) {
  return {static_cast<int>(g.dimension(0)), static_cast<int>(g.dimension(1)),
          static_cast<int>(g.dimension(2))};
}

/// 3D intensity scan with identity and spacing metadata. Spacing is carried
/// along but never used for geometry.
struct Volume {
  Grid3<float> voxels;
  std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};
  std::string patient_id;
  std::string scan_id;

  Shape3 shape() const { return shape_of(voxels); }
};

enum class MaskSource { ground_truth, predicted };

std::string to_string(MaskSource s);
MaskSource mask_source_from_string(const std::string& s);

/// Binary segmentation volume; every voxel is 0 or 1.
struct Mask3D {
  Grid3<std::uint8_t> voxels;
  MaskSource source = MaskSource::ground_truth;

  Shape3 shape() const { return shape_of(voxels); }
  std::int64_t foreground() const;
};

inline Grid3<float> make_grid(const Shape3& s, float fill = 0.0f) {
  Grid3<float> g(s.nx, s.ny, s.nz);
  g.setConstant(fill);
  return g;
}

inline Grid3<std::uint8_t> make_mask_grid(const Shape3& s) {
  Grid3<std::uint8_t> g(s.nx, s.ny, s.nz);
  g.setZero();
  return g;
}

/// Errors raised on invalid inputs to any pipeline operation.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Errors raised on file-system and format problems.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace planeseg
