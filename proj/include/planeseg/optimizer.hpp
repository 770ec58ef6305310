// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "planeseg/nn.hpp"

namespace planeseg {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.025;
  /// false: L2 term added to the gradient before the moment updates.
  /// true: decay applied directly to the weights (AdamW).
  bool decoupled = false;

  void validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidArgument("betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
    if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be non-negative");
  }
};

template <typename Scalar>
class Adam {
 public:
  Adam(const AdamConfig& config, std::vector<nn::Parameter<Scalar>*> params) : config_(config), params_(std::move(params)) {
    config_.validate();
    for (auto* p : params_) {
      m_.push_back(nn::Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(nn::Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const Scalar step = static_cast<Scalar>(config_.learning_rate / bc1);
    const Scalar inv_bc2 = static_cast<Scalar>(1.0 / bc2);
    const Scalar eps = static_cast<Scalar>(config_.eps);
    const Scalar wd = static_cast<Scalar>(config_.weight_decay);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      nn::Parameter<Scalar>& p = *params_[i];
      const bool decay = p.decay && config_.weight_decay > 0.0;
      auto g = p.grad.array();
      auto w = p.value.array();
      if (decay && config_.decoupled) w *= Scalar(1) - static_cast<Scalar>(config_.learning_rate) * wd;
      if (decay && !config_.decoupled) g += wd * w;
      m_[i].array() = Scalar(b1) * m_[i].array() + Scalar(1 - b1) * g;
      v_[i].array() = Scalar(b2) * v_[i].array() + Scalar(1 - b2) * g.square();
      w -= step * m_[i].array() / ((v_[i].array() * inv_bc2).sqrt() + eps);
    }
  }

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<nn::Parameter<Scalar>*> params_;
  std::vector<nn::Matrix<Scalar>> m_;
  std::vector<nn::Matrix<Scalar>> v_;
  long t_ = 0;
};

}  // namespace planeseg
