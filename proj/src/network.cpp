// SPDX-License-Identifier: Apache-2.0

#include "planeseg/network.hpp"

namespace planeseg {

template class SegmentationModel<float>;

int make_divisible(double value, int divisor) {
  int v = std::max(divisor, static_cast<int>(value + divisor / 2.0) / divisor * divisor);
  if (v < 0.9 * value) v += divisor;
  return v;
}

void ModelConfig::validate() const {
  if (!(width_mult > 0.0)) throw InvalidArgument("width_mult must be positive");
  if (in_channels < 1) throw InvalidArgument("in_channels must be at least 1");
  if (replicate_to_3ch && in_channels != 1) throw InvalidArgument("replicate_to_3ch needs a single input channel");
  if (output_channels != 1) throw InvalidArgument("only single-channel (binary) output is supported");
  if (static_cast<int>(decoder_channels.size()) != kEncoderStages) {
    throw InvalidArgument("decoder needs " + std::to_string(kEncoderStages) + " stages, one per encoder skip");
  }
  for (int c : decoder_channels) {
    if (c < 1) throw InvalidArgument("decoder channels must be positive");
  }
}

SegmentationModel<float> build_model(const ModelConfig& config, std::uint64_t seed) {
  SegmentationModel<float> model(config);
  model.initialize(seed);
  return model;
}

}  // namespace planeseg
