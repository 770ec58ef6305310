// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint file layout:
//   "PLSEGCK1" | u64 little-endian header length | JSON header | float32 data
// The header holds the model config, a provenance block and one
// {name, rows, cols, offset} record per parameter and buffer; offsets count
// floats from the start of the data section.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "planeseg/network.hpp"

namespace planeseg {

struct Provenance {
  std::string scenario;
  std::string plane;
  int fold = -1;
  int epoch = -1;
  double val_loss = 0.0;
  std::uint64_t seed = 0;
};

void save_checkpoint(SegmentationModel<float>& model, const Provenance& provenance,
                     const std::filesystem::path& path);

struct Checkpoint {
  SegmentationModel<float> model;
  Provenance provenance;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace planeseg
