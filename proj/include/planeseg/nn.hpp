// SPDX-License-Identifier: Apache-2.0
//
// Minimal layer set for 2D encoder-decoder segmentation with hand-written
// backward passes.
//
// Activations are channel-major matrices: row c holds channel c for every
// (sample, y, x) position, column index n * H * W + y * W + x. With this
// layout a 1x1 convolution is a single GEMM and a 3x3 convolution is a GEMM
// over im2col columns.
//
// Layers cache what their backward pass needs during a training-mode
// forward; each layer instance serves one forward/backward pair at a time.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "planeseg/grid.hpp"

namespace planeseg::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
struct FeatureMap {
  Matrix<Scalar> data;
  int batch = 0;
  int height = 0;
  int width = 0;

  FeatureMap() = default;
  FeatureMap(int channels, int n, int h, int w)
      : data(Matrix<Scalar>::Zero(channels, static_cast<Eigen::Index>(n) * h * w)), batch(n), height(h), width(w) {}

  /// Shape only; contents left uninitialized for callers that overwrite every entry.
  static FeatureMap uninitialized(int channels, int n, int h, int w) {
    FeatureMap f;
    f.data.resize(channels, static_cast<Eigen::Index>(n) * h * w);
    f.batch = n;
    f.height = h;
    f.width = w;
    return f;
  }

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index plane() const { return static_cast<Eigen::Index>(height) * width; }
  Eigen::Index columns() const { return data.cols(); }
};

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  bool decay = true;
  /// Spatial taps per output channel (k * k), used for fan-out initialization.
  int kernel_area = 1;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
struct Buffer {
  std::string name;
  Matrix<Scalar> value;
};

enum class Mode { train, eval };

/// Collects parameters and buffers of a module tree.
template <typename Scalar>
struct Registry {
  std::vector<Parameter<Scalar>*> params;
  std::vector<Buffer<Scalar>*> buffers;
};

// ---------------------------------------------------------------------------
// Convolution

/// Dense k x k convolution (k in {1, 3}), zero padding k / 2.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, bool bias)
      : in_(in_channels), out_(out_channels), k_(kernel), stride_(stride), has_bias_(bias) {
    if (kernel != 1 && kernel != 3) throw InvalidArgument("Conv2d supports kernel 1 or 3");
    if (stride != 1 && stride != 2) throw InvalidArgument("Conv2d supports stride 1 or 2");
    weight_.name = name + ".weight";
    weight_.value = Matrix<Scalar>::Zero(out_, in_ * k_ * k_);
    weight_.kernel_area = k_ * k_;
    weight_.zero_grad();
    if (has_bias_) {
      bias_.name = name + ".bias";
      bias_.value = Matrix<Scalar>::Zero(out_, 1);
      bias_.decay = true;
      bias_.zero_grad();
    }
  }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  bool has_bias() const { return has_bias_; }

  void collect(Registry<Scalar>& r) {
    r.params.push_back(&weight_);
    if (has_bias_) r.params.push_back(&bias_);
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Mode mode) {
    if (x.channels() != in_) {
      throw InvalidArgument(weight_.name + ": expected " + std::to_string(in_) + " channels, got " +
                            std::to_string(x.channels()));
    }
    const int ho = out_extent(x.height);
    const int wo = out_extent(x.width);
    auto y = FeatureMap<Scalar>::uninitialized(out_, x.batch, ho, wo);
    if (k_ == 1 && stride_ == 1) {
      y.data.noalias() = weight_.value * x.data;
    } else {
      Matrix<Scalar> col;
      for_each_chunk(x, ho, wo, [&](int line0, int lines) {
        im2col(x, ho, wo, line0, lines, col);
        y.data.middleCols(static_cast<Eigen::Index>(line0) * wo, col.cols()).noalias() = weight_.value * col;
      });
    }
    if (has_bias_) y.data.colwise() += bias_.value.col(0);
    if (mode == Mode::train) input_ = x;
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    const FeatureMap<Scalar>& x = input_;
    if (has_bias_) bias_.grad.col(0) += dy.data.rowwise().sum();
    if (k_ == 1 && stride_ == 1) {
      auto dx = FeatureMap<Scalar>::uninitialized(in_, x.batch, x.height, x.width);
      weight_.grad.noalias() += dy.data * x.data.transpose();
      dx.data.noalias() = weight_.value.transpose() * dy.data;
      return dx;
    }
    FeatureMap<Scalar> dx(in_, x.batch, x.height, x.width);
    const int ho = dy.height;
    const int wo = dy.width;
    Matrix<Scalar> col;
    Matrix<Scalar> dcol;
    for_each_chunk(x, ho, wo, [&](int line0, int lines) {
      im2col(x, ho, wo, line0, lines, col);
      const auto g = dy.data.middleCols(static_cast<Eigen::Index>(line0) * wo, col.cols());
      weight_.grad.noalias() += g * col.transpose();
      dcol.noalias() = weight_.value.transpose() * g;
      col2im(dcol, ho, wo, line0, lines, dx);
    });
    return dx;
  }

  void release() { input_ = FeatureMap<Scalar>(); }

 private:
  int out_extent(int n) const { return (n + 2 * (k_ / 2) - k_) / stride_ + 1; }

  // Processes output rows ("lines", each one (sample, oy) pair) in chunks of
  // roughly 8k columns to bound im2col memory.
  template <typename F>
  void for_each_chunk(const FeatureMap<Scalar>& x, int ho, int wo, F&& f) const {
    const int total = x.batch * ho;
    const int per = std::max(1, 8192 / std::max(1, wo));
    for (int l = 0; l < total; l += per) f(l, std::min(per, total - l));
  }

  // Output columns [lo, hi) whose input column ox * stride + kx - pad is in range.
  std::pair<int, int> valid_range(int kx, int wo, int width) const {
    const int pad = k_ / 2;
    int lo = 0;
    while (lo < wo && lo * stride_ + kx - pad < 0) ++lo;
    int hi = wo;
    while (hi > lo && (hi - 1) * stride_ + kx - pad >= width) --hi;
    return {lo, hi};
  }

  void im2col(const FeatureMap<Scalar>& x, int ho, int wo, int line0, int lines, Matrix<Scalar>& col) const {
    const int pad = k_ / 2;
    const Eigen::Index plane = x.plane();
    col.resize(static_cast<Eigen::Index>(in_) * k_ * k_, static_cast<Eigen::Index>(lines) * wo);
    for (int kx = 0; kx < k_; ++kx) {
      const auto [lo, hi] = valid_range(kx, wo, x.width);
      const int shift = kx - pad;
      for (int c = 0; c < in_; ++c) {
        const Scalar* src_c = x.data.row(c).data();
        for (int ky = 0; ky < k_; ++ky) {
          Scalar* dst = col.row((c * k_ + ky) * k_ + kx).data();
          for (int l = 0; l < lines; ++l) {
            const int line = line0 + l;
            const int n = line / ho;
            const int oy = line % ho;
            const int iy = oy * stride_ + ky - pad;
            Scalar* d = dst + static_cast<Eigen::Index>(l) * wo;
            if (iy < 0 || iy >= x.height) {
              std::fill(d, d + wo, Scalar(0));
              continue;
            }
            const Scalar* s = src_c + n * plane + static_cast<Eigen::Index>(iy) * x.width + shift;
            std::fill(d, d + lo, Scalar(0));
            if (stride_ == 1) {
              std::copy(s + lo, s + hi, d + lo);
            } else {
              for (int ox = lo; ox < hi; ++ox) d[ox] = s[ox * stride_];
            }
            std::fill(d + hi, d + wo, Scalar(0));
          }
        }
      }
    }
  }

  void col2im(const Matrix<Scalar>& dcol, int ho, int wo, int line0, int lines, FeatureMap<Scalar>& dx) const {
    const int pad = k_ / 2;
    const Eigen::Index plane = dx.plane();
    for (int kx = 0; kx < k_; ++kx) {
      const auto [lo, hi] = valid_range(kx, wo, dx.width);
      const int shift = kx - pad;
      for (int c = 0; c < in_; ++c) {
        Scalar* dst_c = dx.data.row(c).data();
        for (int ky = 0; ky < k_; ++ky) {
          const Scalar* src = dcol.row((c * k_ + ky) * k_ + kx).data();
          for (int l = 0; l < lines; ++l) {
            const int line = line0 + l;
            const int n = line / ho;
            const int oy = line % ho;
            const int iy = oy * stride_ + ky - pad;
            if (iy < 0 || iy >= dx.height) continue;
            const Scalar* s = src + static_cast<Eigen::Index>(l) * wo;
            Scalar* d = dst_c + n * plane + static_cast<Eigen::Index>(iy) * dx.width + shift;
            if (stride_ == 1) {
              for (int ox = lo; ox < hi; ++ox) d[ox] += s[ox];
            } else {
              for (int ox = lo; ox < hi; ++ox) d[ox * stride_] += s[ox];
            }
          }
        }
      }
    }
  }

  int in_ = 0;
  int out_ = 0;
  int k_ = 1;
  int stride_ = 1;
  bool has_bias_ = false;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  FeatureMap<Scalar> input_;
};

/// Depthwise 3x3 convolution, padding 1, no bias.
template <typename Scalar>
class DepthwiseConv3x3 {
 public:
  DepthwiseConv3x3() = default;
  DepthwiseConv3x3(std::string name, int channels, int stride) : c_(channels), stride_(stride) {
    if (stride != 1 && stride != 2) throw InvalidArgument("depthwise stride must be 1 or 2");
    weight_.name = name + ".weight";
    weight_.value = Matrix<Scalar>::Zero(c_, 9);
    weight_.kernel_area = 9;
    weight_.zero_grad();
  }

  int channels() const { return c_; }
  int stride() const { return stride_; }
  Parameter<Scalar>& weight() { return weight_; }
  void collect(Registry<Scalar>& r) { r.params.push_back(&weight_); }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Mode mode) {
    if (x.channels() != c_) throw InvalidArgument(weight_.name + ": channel mismatch");
    const int ho = (x.height - 1) / stride_ + 1;
    const int wo = (x.width - 1) / stride_ + 1;
    FeatureMap<Scalar> y(c_, x.batch, ho, wo);
    std::array<std::pair<int, int>, 3> range;
    for (int kx = 0; kx < 3; ++kx) range[kx] = valid_range(kx, wo, x.width);
    for (int c = 0; c < c_; ++c) {
      const Scalar* w = weight_.value.row(c).data();
      const Scalar* src = x.data.row(c).data();
      Scalar* dst = y.data.row(c).data();
      for (int n = 0; n < x.batch; ++n) {
        const Scalar* s = src + n * x.plane();
        Scalar* d = dst + n * y.plane();
        for (int oy = 0; oy < ho; ++oy) {
          Scalar* drow = d + static_cast<Eigen::Index>(oy) * wo;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * stride_ + ky - 1;
            if (iy < 0 || iy >= x.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const Scalar wk = w[ky * 3 + kx];
              const Scalar* srow = s + static_cast<Eigen::Index>(iy) * x.width + kx - 1;
              const auto [lo, hi] = range[kx];
              if (stride_ == 1) {
                for (int ox = lo; ox < hi; ++ox) drow[ox] += wk * srow[ox];
              } else {
                for (int ox = lo; ox < hi; ++ox) drow[ox] += wk * srow[2 * ox];
              }
            }
          }
        }
      }
    }
    if (mode == Mode::train) input_ = x;
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    const FeatureMap<Scalar>& x = input_;
    FeatureMap<Scalar> dx(c_, x.batch, x.height, x.width);
    const int ho = dy.height;
    const int wo = dy.width;
    std::array<std::pair<int, int>, 3> range;
    for (int kx = 0; kx < 3; ++kx) range[kx] = valid_range(kx, wo, x.width);
    for (int c = 0; c < c_; ++c) {
      const Scalar* w = weight_.value.row(c).data();
      Scalar* gw = weight_.grad.row(c).data();
      const Scalar* src = x.data.row(c).data();
      const Scalar* gsrc = dy.data.row(c).data();
      Scalar* gdst = dx.data.row(c).data();
      for (int n = 0; n < x.batch; ++n) {
        const Scalar* s = src + n * x.plane();
        const Scalar* g = gsrc + n * dy.plane();
        Scalar* gd = gdst + n * dx.plane();
        for (int oy = 0; oy < ho; ++oy) {
          const Scalar* grow = g + static_cast<Eigen::Index>(oy) * wo;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * stride_ + ky - 1;
            if (iy < 0 || iy >= x.height) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const Scalar wk = w[ky * 3 + kx];
              const Eigen::Index off = static_cast<Eigen::Index>(iy) * x.width + kx - 1;
              const Scalar* srow = s + off;
              Scalar* gdrow = gd + off;
              const auto [lo, hi] = range[kx];
              Scalar acc = 0;
              if (stride_ == 1) {
                for (int ox = lo; ox < hi; ++ox) {
                  acc += grow[ox] * srow[ox];
                  gdrow[ox] += wk * grow[ox];
                }
              } else {
                for (int ox = lo; ox < hi; ++ox) {
                  acc += grow[ox] * srow[2 * ox];
                  gdrow[2 * ox] += wk * grow[ox];
                }
              }
              gw[ky * 3 + kx] += acc;
            }
          }
        }
      }
    }
    return dx;
  }

 private:
  std::pair<int, int> valid_range(int kx, int wo, int width) const {
    int lo = 0;
    while (lo < wo && lo * stride_ + kx - 1 < 0) ++lo;
    int hi = wo;
    while (hi > lo && (hi - 1) * stride_ + kx - 1 >= width) --hi;
    return {lo, hi};
  }

  int c_ = 0;
  int stride_ = 1;
  Parameter<Scalar> weight_;
  FeatureMap<Scalar> input_;
};

// ---------------------------------------------------------------------------
// Normalization and activations

template <typename Scalar>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, int channels, double momentum = 0.1, double eps = 1e-5)
      : momentum_(momentum), eps_(eps) {
    gamma_.name = name + ".gamma";
    gamma_.value = Matrix<Scalar>::Ones(channels, 1);
    gamma_.zero_grad();
    beta_.name = name + ".beta";
    beta_.value = Matrix<Scalar>::Zero(channels, 1);
    beta_.zero_grad();
    running_mean_.name = name + ".running_mean";
    running_mean_.value = Matrix<Scalar>::Zero(channels, 1);
    running_var_.name = name + ".running_var";
    running_var_.value = Matrix<Scalar>::Ones(channels, 1);
  }

  void collect(Registry<Scalar>& r) {
    r.params.push_back(&gamma_);
    r.params.push_back(&beta_);
    r.buffers.push_back(&running_mean_);
    r.buffers.push_back(&running_var_);
  }

  Parameter<Scalar>& gamma() { return gamma_; }
  Parameter<Scalar>& beta() { return beta_; }

  /// Training mode normalizes with batch statistics and updates running
  /// estimates; `update_running = false` leaves them untouched.
  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Mode mode, bool update_running = true) {
    FeatureMap<Scalar> y;
    y.batch = x.batch;
    y.height = x.height;
    y.width = x.width;
    const Eigen::Index m = x.columns();
    if (mode == Mode::eval) {
      const auto inv = (running_var_.value.array() + Scalar(eps_)).rsqrt().matrix();
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scale = gamma_.value.col(0).cwiseProduct(inv.col(0));
      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> shift =
          beta_.value.col(0) - scale.cwiseProduct(running_mean_.value.col(0));
      y.data = (x.data.array().colwise() * scale.array()).matrix();
      y.data.colwise() += shift;
      return y;
    }
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean = x.data.rowwise().mean();
    xhat_ = x.data;
    xhat_.colwise() -= mean;
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> var = xhat_.array().square().rowwise().mean();
    inv_std_ = (var.array() + Scalar(eps_)).rsqrt().matrix();
    xhat_ = (xhat_.array().colwise() * inv_std_.array()).matrix();
    y.data = (xhat_.array().colwise() * gamma_.value.col(0).array()).matrix();
    y.data.colwise() += beta_.value.col(0);
    if (update_running) {
      const Scalar mom = Scalar(momentum_);
      const Scalar unbias = m > 1 ? Scalar(double(m) / double(m - 1)) : Scalar(1);
      running_mean_.value.col(0) = (Scalar(1) - mom) * running_mean_.value.col(0) + mom * mean;
      running_var_.value.col(0) = (Scalar(1) - mom) * running_var_.value.col(0) + mom * unbias * var;
    }
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    FeatureMap<Scalar> dx;
    dx.batch = dy.batch;
    dx.height = dy.height;
    dx.width = dy.width;
    const Scalar m = Scalar(dy.columns());
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sum_dy = dy.data.rowwise().sum();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sum_dy_xhat = dy.data.cwiseProduct(xhat_).rowwise().sum();
    beta_.grad.col(0) += sum_dy;
    gamma_.grad.col(0) += sum_dy_xhat;
    // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
    dx.data = dy.data * m;
    dx.data.colwise() -= sum_dy;
    dx.data -= (xhat_.array().colwise() * sum_dy_xhat.array()).matrix();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> coef =
        gamma_.value.col(0).cwiseProduct(inv_std_) / m;
    dx.data = (dx.data.array().colwise() * coef.array()).matrix();
    return dx;
  }

  void release() { xhat_.resize(0, 0); }

 private:
  double momentum_ = 0.1;
  double eps_ = 1e-5;
  Parameter<Scalar> gamma_;
  Parameter<Scalar> beta_;
  Buffer<Scalar> running_mean_;
  Buffer<Scalar> running_var_;
  Matrix<Scalar> xhat_;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std_;
};

enum class Activation { none, relu, relu6 };

template <typename Scalar>
class Activate {
 public:
  explicit Activate(Activation kind = Activation::none) : kind_(kind) {}

  FeatureMap<Scalar> forward(FeatureMap<Scalar> x, Mode mode) {
    if (kind_ == Activation::relu) x.data = x.data.cwiseMax(Scalar(0));
    if (kind_ == Activation::relu6) x.data = x.data.cwiseMax(Scalar(0)).cwiseMin(Scalar(6));
    if (mode == Mode::train && kind_ != Activation::none) output_ = x.data;
    return x;
  }

  FeatureMap<Scalar> backward(FeatureMap<Scalar> dy) {
    if (kind_ == Activation::relu) {
      dy.data = (output_.array() > Scalar(0)).select(dy.data, Scalar(0));
    } else if (kind_ == Activation::relu6) {
      dy.data = (output_.array() > Scalar(0) && output_.array() < Scalar(6)).select(dy.data, Scalar(0));
    }
    return dy;
  }

 private:
  Activation kind_;
  Matrix<Scalar> output_;
};

/// conv -> (batch norm) -> activation. Without batch norm the conv carries a bias.
template <typename Scalar>
class ConvNormAct {
 public:
  ConvNormAct() = default;
  ConvNormAct(const std::string& name, int in, int out, int kernel, int stride, Activation act, bool batch_norm)
      : conv_(name + ".conv", in, out, kernel, stride, !batch_norm), act_(act), use_bn_(batch_norm) {
    if (use_bn_) bn_ = BatchNorm<Scalar>(name + ".bn", out);
  }

  Conv2d<Scalar>& conv() { return conv_; }
  int out_channels() const { return conv_.out_channels(); }

  void collect(Registry<Scalar>& r) {
    conv_.collect(r);
    if (use_bn_) bn_.collect(r);
  }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, Mode mode) {
    FeatureMap<Scalar> y = conv_.forward(x, mode);
    if (use_bn_) y = bn_.forward(y, mode);
    return act_.forward(std::move(y), mode);
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    FeatureMap<Scalar> g = act_.backward(dy);
    if (use_bn_) g = bn_.backward(g);
    return conv_.backward(g);
  }

 private:
  Conv2d<Scalar> conv_;
  BatchNorm<Scalar> bn_;
  Activate<Scalar> act_;
  bool use_bn_ = true;
};

// ---------------------------------------------------------------------------
// Resampling and joins

template <typename Scalar>
FeatureMap<Scalar> upsample2x(const FeatureMap<Scalar>& x) {
  auto y = FeatureMap<Scalar>::uninitialized(x.channels(), x.batch, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels(); ++c) {
    const Scalar* s = x.data.row(c).data();
    Scalar* d = y.data.row(c).data();
    for (int n = 0; n < x.batch; ++n) {
      for (int oy = 0; oy < y.height; ++oy) {
        const Scalar* srow = s + n * x.plane() + static_cast<Eigen::Index>(oy / 2) * x.width;
        Scalar* drow = d + n * y.plane() + static_cast<Eigen::Index>(oy) * y.width;
        for (int ox = 0; ox < y.width; ++ox) drow[ox] = srow[ox / 2];
      }
    }
  }
  return y;
}

template <typename Scalar>
FeatureMap<Scalar> upsample2x_backward(const FeatureMap<Scalar>& dy) {
  FeatureMap<Scalar> dx(dy.channels(), dy.batch, dy.height / 2, dy.width / 2);
  for (int c = 0; c < dy.channels(); ++c) {
    const Scalar* s = dy.data.row(c).data();
    Scalar* d = dx.data.row(c).data();
    for (int n = 0; n < dy.batch; ++n) {
      for (int oy = 0; oy < dy.height; ++oy) {
        const Scalar* srow = s + n * dy.plane() + static_cast<Eigen::Index>(oy) * dy.width;
        Scalar* drow = d + n * dx.plane() + static_cast<Eigen::Index>(oy / 2) * dx.width;
        for (int ox = 0; ox < dy.width; ++ox) drow[ox / 2] += srow[ox];
      }
    }
  }
  return dx;
}

template <typename Scalar>
FeatureMap<Scalar> concat_channels(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b) {
  if (a.batch != b.batch || a.height != b.height || a.width != b.width) {
    throw InvalidArgument("concat: spatial shape mismatch");
  }
  FeatureMap<Scalar> y;
  y.batch = a.batch;
  y.height = a.height;
  y.width = a.width;
  y.data.resize(a.data.rows() + b.data.rows(), a.data.cols());
  y.data.topRows(a.data.rows()) = a.data;
  y.data.bottomRows(b.data.rows()) = b.data;
  return y;
}

template <typename Scalar>
FeatureMap<Scalar> take_channels(const FeatureMap<Scalar>& x, int first, int count) {
  FeatureMap<Scalar> y;
  y.batch = x.batch;
  y.height = x.height;
  y.width = x.width;
  y.data = x.data.middleRows(first, count);
  return y;
}

// ---------------------------------------------------------------------------
// Initialization

template <typename Scalar>
void init_normal(Matrix<Scalar>& w, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void init_uniform(Matrix<Scalar>& w, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
}

}  // namespace planeseg::nn
