// SPDX-License-Identifier: Apache-2.0
//
// Compound segmentation loss: mean BCE + dice_weight * (1 - soft Dice).
//
// Dice uses additive smoothing in numerator and denominator:
//   D(g, p) = (2 sum(g p) + ep) / (sum(g) + sum(p) + ep)
// so two empty masks score 1. Probabilities are clamped to
// [clamp, 1 - clamp] inside the logarithms only.

#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>

#include <Eigen/Dense>

#include "planeseg/grid.hpp"

namespace planeseg {

struct LossConfig {
  double dice_weight = 0.5;
  double ep = 1.0;
  double probability_clamp = 1e-7;

  void validate() const {
    if (!(dice_weight >= 0.0)) throw InvalidArgument("dice_weight must be non-negative");
    if (!(ep > 0.0)) throw InvalidArgument("dice smoothing ep must be positive");
    if (!(probability_clamp > 0.0 && probability_clamp < 0.5)) {
      throw InvalidArgument("probability_clamp must lie in (0, 0.5)");
    }
  }
};

template <typename T>
using real_of_t = std::conditional_t<std::is_floating_point_v<T>, T, double>;

namespace detail {

template <typename DA, typename DB>
void require_same_shape(const Eigen::ArrayBase<DA>& a, const Eigen::ArrayBase<DB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("shape mismatch");
}

template <typename D>
void require_binary_values(const Eigen::ArrayBase<D>& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const auto v = a(i, j);
      if (!(v == 0 || v == 1)) throw InvalidArgument("ground truth is not binary");
    }
}

template <typename D>
void require_unit_range(const Eigen::ArrayBase<D>& a) {
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double v = static_cast<double>(a(i, j));
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("prediction outside [0, 1]");
    }
}

}  // namespace detail

/// Smoothed Dice between binary `g` and soft or hard `p`.
template <typename DG, typename DP>
real_of_t<typename DP::Scalar> dice_coefficient(const Eigen::ArrayBase<DG>& g, const Eigen::ArrayBase<DP>& p,
                                                 double ep = 1.0) {
  using R = real_of_t<typename DP::Scalar>;
  detail::require_same_shape(g, p);
  detail::require_binary_values(g);
  detail::require_unit_range(p);
  if (!(ep > 0.0)) throw InvalidArgument("dice smoothing ep must be positive");
  double inter = 0.0, sg = 0.0, sp = 0.0;
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double gv = static_cast<double>(g(i, j));
      const double pv = static_cast<double>(p(i, j));
      inter += gv * pv;
      sg += gv;
      sp += pv;
    }
  return static_cast<R>((2.0 * inter + ep) / (sg + sp + ep));
}

/// Mean binary cross-entropy of probabilities `p` against binary labels `y`.
template <typename DP, typename DY>
typename DP::Scalar bce(const Eigen::ArrayBase<DP>& p, const Eigen::ArrayBase<DY>& y, double clamp = 1e-7) {
  using R = typename DP::Scalar;
  detail::require_same_shape(p, y);
  const Eigen::Index n = p.size();
  if (n == 0) throw InvalidArgument("empty input");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double pv = std::clamp(static_cast<double>(p(i, j)), clamp, 1.0 - clamp);
      const double yv = static_cast<double>(y(i, j));
      acc -= yv * std::log(pv) + (1.0 - yv) * std::log(1.0 - pv);
    }
  return static_cast<R>(acc / static_cast<double>(n));
}

template <typename Scalar>
struct LossTerms {
  Scalar bce = 0;
  Scalar dice = 0;
  Scalar total = 0;
};

template <typename DP, typename DY>
LossTerms<typename DP::Scalar> combined_loss_terms(const Eigen::ArrayBase<DP>& p, const Eigen::ArrayBase<DY>& y,
                                                   const LossConfig& config) {
  using R = typename DP::Scalar;
  config.validate();
  LossTerms<R> t;
  t.bce = bce(p, y, config.probability_clamp);
  t.dice = static_cast<R>(dice_coefficient(y, p, config.ep));
  t.total = static_cast<R>(static_cast<double>(t.bce) +
                           config.dice_weight * (1.0 - static_cast<double>(t.dice)));
  return t;
}

template <typename DP, typename DY>
typename DP::Scalar combined_loss(const Eigen::ArrayBase<DP>& p, const Eigen::ArrayBase<DY>& y,
                                  const LossConfig& config) {
  return combined_loss_terms(p, y, config).total;
}

/// Analytic d(combined_loss)/dp. Pixels whose probability sits on a clamp
/// boundary receive no BCE gradient.
template <typename DP, typename DY>
Eigen::Array<typename DP::Scalar, Eigen::Dynamic, Eigen::Dynamic> combined_loss_gradient(
    const Eigen::ArrayBase<DP>& p, const Eigen::ArrayBase<DY>& y, const LossConfig& config) {
  using R = typename DP::Scalar;
  config.validate();
  detail::require_same_shape(p, y);
  const double n = static_cast<double>(p.size());
  double inter = 0.0, sy = 0.0, sp = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double pv = static_cast<double>(p(i, j));
      const double yv = static_cast<double>(y(i, j));
      inter += yv * pv;
      sy += yv;
      sp += pv;
    }
  const double denom = sy + sp + config.ep;
  const double numer = 2.0 * inter + config.ep;
  const double lo = config.probability_clamp;
  const double hi = 1.0 - config.probability_clamp;
  Eigen::Array<R, Eigen::Dynamic, Eigen::Dynamic> grad(p.rows(), p.cols());
  for (Eigen::Index j = 0; j < p.cols(); ++j)
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double pv = static_cast<double>(p(i, j));
      const double yv = static_cast<double>(y(i, j));
      double g_bce = 0.0;
      if (pv > lo && pv < hi) g_bce = -(yv / pv - (1.0 - yv) / (1.0 - pv)) / n;
      const double d_dice = (2.0 * yv * denom - numer) / (denom * denom);
      grad(i, j) = static_cast<R>(g_bce - config.dice_weight * d_dice);
    }
  return grad;
}

}  // namespace planeseg
