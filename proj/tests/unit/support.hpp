// SPDX-License-Identifier: Apache-2.0
//
// Shared helpers for the unit tests.

#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "planeseg/grid.hpp"

namespace planeseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("planeseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Mask3D random_mask(const Shape3& s, std::mt19937_64& rng, double fill = 0.5) {
  Mask3D m;
  m.voxels = make_mask_grid(s);
  std::bernoulli_distribution coin(fill);
  for (Eigen::Index i = 0; i < m.voxels.size(); ++i) m.voxels.data()[i] = coin(rng) ? 1 : 0;
  return m;
}

inline Volume random_volume(const Shape3& s, std::mt19937_64& rng) {
  Volume v;
  v.voxels = make_grid(s);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (Eigen::Index i = 0; i < v.voxels.size(); ++i) v.voxels.data()[i] = u(rng);
  return v;
}

}  // namespace planeseg::testing
