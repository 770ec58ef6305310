// SPDX-License-Identifier: Apache-2.0
//
// 2D slice preprocessing: square resize, centre crop, paired random flips.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "planeseg/dataset.hpp"
#include "planeseg/grid.hpp"

namespace planeseg {

struct AugmentConfig {
  int resize_to = 576;
  int crop_to = 512;
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Resize2D { bilinear, nearest };

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double unit_draw(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace detail {

inline void bilinear_taps(int src, int dst, std::vector<int>& lo, std::vector<int>& hi, std::vector<double>& frac) {
  lo.resize(dst);
  hi.resize(dst);
  frac.resize(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    const double s = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(src - 1));
    lo[i] = static_cast<int>(std::floor(s));
    hi[i] = std::min(lo[i] + 1, src - 1);
    frac[i] = s - lo[i];
  }
}

inline int nearest_tap(int dst, int src, int dst_extent) {
  const int i = static_cast<int>((dst + 0.5) * static_cast<double>(src) / dst_extent);
  return i < src ? i : src - 1;
}

}  // namespace detail

/// Resizes to `rows` x `cols` with half-pixel centred sampling.
template <typename Scalar>
Grid2<Scalar> resize2d(const Grid2<Scalar>& image, int rows, int cols, Resize2D mode) {
  if (rows < 1 || cols < 1) throw InvalidArgument("non-positive resize target");
  if (image.rows() < 1 || image.cols() < 1) throw InvalidArgument("empty image");
  const int src_r = static_cast<int>(image.rows());
  const int src_c = static_cast<int>(image.cols());
  if (src_r == rows && src_c == cols) return image;
  Grid2<Scalar> out(rows, cols);
  if (mode == Resize2D::nearest) {
    std::vector<int> ri(rows), ci(cols);
    for (int r = 0; r < rows; ++r) ri[r] = detail::nearest_tap(r, src_r, rows);
    for (int c = 0; c < cols; ++c) ci[c] = detail::nearest_tap(c, src_c, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) out(r, c) = image(ri[r], ci[c]);
    return out;
  }
  std::vector<int> rl, rh, cl, ch;
  std::vector<double> rf, cf;
  detail::bilinear_taps(src_r, rows, rl, rh, rf);
  detail::bilinear_taps(src_c, cols, cl, ch, cf);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) {
      const double top = (1.0 - cf[c]) * image(rl[r], cl[c]) + cf[c] * image(rl[r], ch[c]);
      const double bot = (1.0 - cf[c]) * image(rh[r], cl[c]) + cf[c] * image(rh[r], ch[c]);
      out(r, c) = static_cast<Scalar>((1.0 - rf[r]) * top + rf[r] * bot);
    }
  }
  return out;
}

/// Square resize.
template <typename Scalar>
Grid2<Scalar> resize2d(const Grid2<Scalar>& image, int size, Resize2D mode) {
  if (size < 1) throw InvalidArgument("non-positive resize size " + std::to_string(size));
  return resize2d(image, size, size, mode);
}

/// Window offset used by center_crop along an axis of length `dim`.
inline int crop_offset(int dim, int size) { return (dim - size) / 2; }

template <typename Scalar>
Grid2<Scalar> center_crop(const Grid2<Scalar>& image, int size) {
  if (size < 1 || size > image.rows() || size > image.cols()) {
    throw InvalidArgument("crop size " + std::to_string(size) + " larger than input " +
                          std::to_string(image.rows()) + "x" + std::to_string(image.cols()));
  }
  const int r0 = crop_offset(static_cast<int>(image.rows()), size);
  const int c0 = crop_offset(static_cast<int>(image.cols()), size);
  return image.block(r0, c0, size, size);
}

/// Inverse placement of center_crop: embeds `crop` centred in a zero `rows` x `cols` grid.
template <typename Scalar>
Grid2<Scalar> uncrop(const Grid2<Scalar>& crop, int rows, int cols) {
  if (crop.rows() > rows || crop.cols() > cols) throw InvalidArgument("uncrop target smaller than crop");
  Grid2<Scalar> out = Grid2<Scalar>::Zero(rows, cols);
  out.block(crop_offset(rows, static_cast<int>(crop.rows())), crop_offset(cols, static_cast<int>(crop.cols())),
            crop.rows(), crop.cols()) = crop;
  return out;
}

struct FlipDecision {
  bool horizontal = false;
  bool vertical = false;
};

/// Draws both flip decisions; always consumes exactly two values from `rng`.
inline FlipDecision draw_flips(const AugmentConfig& config, std::mt19937_64& rng) {
  const double h = unit_draw(rng);
  const double v = unit_draw(rng);
  return {h < config.p_hflip, v < config.p_vflip};
}

template <typename Scalar>
Grid2<Scalar> apply_flips(const Grid2<Scalar>& g, FlipDecision d) {
  Grid2<Scalar> out = g;
  if (d.horizontal) out = out.rowwise().reverse().eval();
  if (d.vertical) out = out.colwise().reverse().eval();
  return out;
}

/// Flips image and mask with the same random decisions.
std::pair<Image2, Mask2> random_flip(const Image2& image, const Mask2& mask, const AugmentConfig& config,
                                     std::mt19937_64& rng);

/// resize -> center crop. Deterministic.
std::pair<Image2, Mask2> eval_transform(const SliceRecord& record, const AugmentConfig& config);

/// resize -> center crop -> random flips.
std::pair<Image2, Mask2> train_transform(const SliceRecord& record, const AugmentConfig& config,
                                         std::mt19937_64& rng);

}  // namespace planeseg
