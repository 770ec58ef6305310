// SPDX-License-Identifier: Apache-2.0

#include "planeseg/augment.hpp"

namespace planeseg {

void AugmentConfig::validate() const {
  if (resize_to < 2) throw InvalidArgument("resize_to must be at least 2");
  if (crop_to < 1 || crop_to > resize_to) throw InvalidArgument("crop_to must be in [1, resize_to]");
  if (!(p_hflip >= 0.0 && p_hflip <= 1.0) || !(p_vflip >= 0.0 && p_vflip <= 1.0)) {
    throw InvalidArgument("flip probabilities must lie in [0, 1]");
  }
}

std::pair<Image2, Mask2> random_flip(const Image2& image, const Mask2& mask, const AugmentConfig& config,
                                     std::mt19937_64& rng) {
  if (image.rows() != mask.rows() || image.cols() != mask.cols()) {
    throw InvalidArgument("image and mask shapes differ");
  }
  const FlipDecision d = draw_flips(config, rng);
  return {apply_flips(image, d), apply_flips(mask, d)};
}

std::pair<Image2, Mask2> eval_transform(const SliceRecord& record, const AugmentConfig& config) {
  config.validate();
  if (record.image.rows() != record.mask.rows() || record.image.cols() != record.mask.cols()) {
    throw InvalidArgument("record image and mask shapes differ");
  }
  Image2 img = center_crop(resize2d(record.image, config.resize_to, Resize2D::bilinear), config.crop_to);
  Mask2 msk = center_crop(resize2d(record.mask, config.resize_to, Resize2D::nearest), config.crop_to);
  return {std::move(img), std::move(msk)};
}

std::pair<Image2, Mask2> train_transform(const SliceRecord& record, const AugmentConfig& config,
                                         std::mt19937_64& rng) {
  auto [img, msk] = eval_transform(record, config);
  return random_flip(img, msk, config, rng);
}

}  // namespace planeseg
