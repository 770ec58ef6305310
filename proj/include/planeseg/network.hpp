// SPDX-License-Identifier: Apache-2.0
//
// U-Net with a MobileNet-v2 inverted-residual encoder.
//
// Encoder: stride-2 stem conv, then inverted-residual blocks (expansion,
// depthwise 3x3, linear projection, identity shortcut at stride 1 with equal
// channels) grouped into five stages whose outputs sit at strides 2..32.
// Decoder: five blocks of 2x nearest upsample, concatenation with the skip of
// matching resolution (the input image for the last block), and two 3x3
// conv-ReLU layers (optionally with BN). Head: 1x1 conv and sigmoid.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "planeseg/nn.hpp"

namespace planeseg {

struct ModelConfig {
  int in_channels = 1;
  double width_mult = 1.0;
  std::vector<int> decoder_channels{256, 128, 64, 32, 16};
  int output_channels = 1;
  /// Batch normalization inside the encoder blocks.
  bool batch_norm = true;
  /// Batch normalization in the decoder convs. Without it the decoder convs
  /// carry biases, and logit scale is free to grow at small learning rates.
  bool decoder_batch_norm = false;
  /// Feed a grayscale slice as three identical channels.
  bool replicate_to_3ch = false;

  int input_channels() const { return replicate_to_3ch ? 3 : in_channels; }
  void validate() const;
};

/// Channel rounding used by MobileNet-v2 width scaling.
int make_divisible(double value, int divisor = 8);

struct InvertedResidualSpec {
  int expand;
  int channels;
  int repeats;
  int stride;
};

/// MobileNet-v2 bottleneck table (expansion, channels, repeats, stride).
inline constexpr std::array<InvertedResidualSpec, 7> kMobileNetV2Blocks{{
    {1, 16, 1, 1},
    {6, 24, 2, 2},
    {6, 32, 3, 2},
    {6, 64, 4, 2},
    {6, 96, 3, 1},
    {6, 160, 3, 2},
    {6, 320, 1, 1},
}};

/// Encoder stage (0..4) each bottleneck row belongs to.
inline constexpr std::array<int, 7> kBlockStage{0, 1, 2, 3, 3, 4, 4};

inline constexpr int kStemChannels = 32;
inline constexpr int kEncoderStages = 5;
inline constexpr int kOutputStride = 32;
/// Logits are clipped to this magnitude so probabilities stay strictly inside (0, 1) in float.
inline constexpr double kLogitClip = 16.0;

template <typename Scalar>
class InvertedResidual {
 public:
  InvertedResidual(const std::string& name, int in, int out, int stride, int expand, bool batch_norm)
      : has_expand_(expand != 1), use_bn_(batch_norm), residual_(stride == 1 && in == out), in_(in), out_(out) {
    const int hidden = in * expand;
    if (has_expand_) expand_ = nn::ConvNormAct<Scalar>(name + ".expand", in, hidden, 1, 1, nn::Activation::relu6, batch_norm);
    dw_ = nn::DepthwiseConv3x3<Scalar>(name + ".depthwise", hidden, stride);
    if (use_bn_) dw_bn_ = nn::BatchNorm<Scalar>(name + ".depthwise.bn", hidden);
    project_ = nn::ConvNormAct<Scalar>(name + ".project", hidden, out, 1, 1, nn::Activation::none, batch_norm);
  }

  int out_channels() const { return out_; }
  bool residual() const { return residual_; }

  void collect(nn::Registry<Scalar>& r) {
    if (has_expand_) expand_.collect(r);
    dw_.collect(r);
    if (use_bn_) dw_bn_.collect(r);
    project_.collect(r);
  }

  nn::FeatureMap<Scalar> forward(const nn::FeatureMap<Scalar>& x, nn::Mode mode) {
    nn::FeatureMap<Scalar> h = has_expand_ ? expand_.forward(x, mode) : x;
    h = dw_.forward(h, mode);
    if (use_bn_) h = dw_bn_.forward(h, mode);
    h = dw_act_.forward(std::move(h), mode);
    h = project_.forward(h, mode);
    if (residual_) h.data += x.data;
    return h;
  }

  nn::FeatureMap<Scalar> backward(const nn::FeatureMap<Scalar>& dy) {
    nn::FeatureMap<Scalar> g = project_.backward(dy);
    g = dw_act_.backward(std::move(g));
    if (use_bn_) g = dw_bn_.backward(g);
    g = dw_.backward(g);
    if (has_expand_) g = expand_.backward(g);
    if (residual_) g.data += dy.data;
    return g;
  }

 private:
  bool has_expand_;
  bool use_bn_;
  bool residual_;
  int in_;
  int out_;
  nn::ConvNormAct<Scalar> expand_;
  nn::DepthwiseConv3x3<Scalar> dw_;
  nn::BatchNorm<Scalar> dw_bn_;
  nn::Activate<Scalar> dw_act_{nn::Activation::relu6};
  nn::ConvNormAct<Scalar> project_;
};

template <typename Scalar>
class DecoderBlock {
 public:
  DecoderBlock(const std::string& name, int in, int skip, int out, bool batch_norm)
      : in_(in),
        skip_(skip),
        conv1_(name + ".conv1", in + skip, out, 3, 1, nn::Activation::relu, batch_norm),
        conv2_(name + ".conv2", out, out, 3, 1, nn::Activation::relu, batch_norm) {}

  void collect(nn::Registry<Scalar>& r) {
    conv1_.collect(r);
    conv2_.collect(r);
  }

  nn::FeatureMap<Scalar> forward(const nn::FeatureMap<Scalar>& x, const nn::FeatureMap<Scalar>& skip, nn::Mode mode) {
    nn::FeatureMap<Scalar> h = nn::concat_channels(nn::upsample2x(x), skip);
    h = conv1_.forward(h, mode);
    return conv2_.forward(h, mode);
  }

  /// Returns (gradient w.r.t. x, gradient w.r.t. skip).
  std::pair<nn::FeatureMap<Scalar>, nn::FeatureMap<Scalar>> backward(const nn::FeatureMap<Scalar>& dy) {
    nn::FeatureMap<Scalar> g = conv2_.backward(dy);
    g = conv1_.backward(g);
    nn::FeatureMap<Scalar> g_up = nn::take_channels(g, 0, in_);
    nn::FeatureMap<Scalar> g_skip = nn::take_channels(g, in_, skip_);
    return {nn::upsample2x_backward(g_up), std::move(g_skip)};
  }

 private:
  int in_;
  int skip_;
  nn::ConvNormAct<Scalar> conv1_;
  nn::ConvNormAct<Scalar> conv2_;
};

/// Trainable 2D segmentation network. Holds per-layer caches, so one
/// instance serves a single forward/backward stream at a time.
template <typename Scalar>
class SegmentationModel {
 public:
  explicit SegmentationModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    const bool bn = config_.batch_norm;
    const int stem = make_divisible(kStemChannels * config_.width_mult);
    stem_ = nn::ConvNormAct<Scalar>("encoder.stem", config_.input_channels(), stem, 3, 2, nn::Activation::relu6, bn);
    int in = stem;
    int block = 0;
    for (std::size_t row = 0; row < kMobileNetV2Blocks.size(); ++row) {
      const auto& spec = kMobileNetV2Blocks[row];
      const int out = make_divisible(spec.channels * config_.width_mult);
      for (int i = 0; i < spec.repeats; ++i) {
        const int stride = i == 0 ? spec.stride : 1;
        blocks_.emplace_back("encoder.block" + std::to_string(block++), in, out, stride, spec.expand, bn);
        block_stage_.push_back(kBlockStage[row]);
        in = out;
      }
      stage_channels_[kBlockStage[row]] = out;
    }
    const auto& dec = config_.decoder_channels;
    int prev = stage_channels_[4];
    for (int i = 0; i < kEncoderStages; ++i) {
      const int skip = i < kEncoderStages - 1 ? stage_channels_[3 - i] : config_.input_channels();
      decoder_.emplace_back("decoder.block" + std::to_string(i), prev, skip, dec[i], config_.decoder_batch_norm);
      prev = dec[i];
    }
    head_ = nn::Conv2d<Scalar>("head", prev, config_.output_channels, 1, 1, true);
  }

  const ModelConfig& config() const { return config_; }
  /// Output channels of encoder stage 0..4 (strides 2..32).
  const std::array<int, kEncoderStages>& stage_channels() const { return stage_channels_; }
  std::size_t encoder_blocks() const { return blocks_.size(); }
  InvertedResidual<Scalar>& block(std::size_t i) { return blocks_.at(i); }

  nn::Registry<Scalar> registry() {
    nn::Registry<Scalar> r;
    stem_.collect(r);
    for (auto& b : blocks_) b.collect(r);
    for (auto& d : decoder_) d.collect(r);
    head_.collect(r);
    return r;
  }

  std::int64_t parameter_count() {
    std::int64_t n = 0;
    for (auto* p : registry().params) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : registry().params) p->zero_grad();
  }

  /// Deterministic initialization: Kaiming-normal (fan-out) encoder convs,
  /// Kaiming-uniform (fan-in) decoder convs, Xavier-uniform head.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto* p : registry().params) {
      const std::string& name = p->name;
      auto ends = [&](const char* s) {
        const std::string suf(s);
        return name.size() >= suf.size() && name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
      };
      if (ends(".gamma")) {
        p->value.setOnes();
      } else if (ends(".beta") || ends(".bias")) {
        p->value.setZero();
      } else if (name.rfind("head", 0) == 0) {
        const double fan_in = static_cast<double>(p->value.cols());
        const double fan_out = static_cast<double>(p->value.rows());
        nn::init_uniform(p->value, std::sqrt(6.0 / (fan_in + fan_out)), rng);
      } else if (name.rfind("decoder", 0) == 0) {
        nn::init_uniform(p->value, std::sqrt(6.0 / static_cast<double>(p->value.cols())), rng);
      } else {
        const double fan_out = static_cast<double>(p->value.rows()) * p->kernel_area;
        nn::init_normal(p->value, std::sqrt(2.0 / fan_out), rng);
      }
      p->zero_grad();
    }
  }

  /// Probabilities for `input` (input_channels x N*H*W); H and W must be multiples of 32.
  nn::FeatureMap<Scalar> forward(const nn::FeatureMap<Scalar>& input, nn::Mode mode) {
    if (input.channels() != config_.input_channels()) {
      throw InvalidArgument("model expects " + std::to_string(config_.input_channels()) + " input channels, got " +
                            std::to_string(input.channels()));
    }
    if (input.height % kOutputStride != 0 || input.width % kOutputStride != 0 || input.height == 0 ||
        input.width == 0) {
      throw InvalidArgument("input spatial size " + std::to_string(input.height) + "x" + std::to_string(input.width) +
                            " is not divisible by 32");
    }
    std::array<nn::FeatureMap<Scalar>, kEncoderStages> skips;
    nn::FeatureMap<Scalar> h = stem_.forward(input, mode);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      h = blocks_[i].forward(h, mode);
      if (i + 1 == blocks_.size() || block_stage_[i + 1] != block_stage_[i]) skips[block_stage_[i]] = h;
    }
    for (int i = 0; i < kEncoderStages; ++i) {
      const nn::FeatureMap<Scalar>& skip = i < kEncoderStages - 1 ? skips[3 - i] : input;
      h = decoder_[i].forward(h, skip, mode);
    }
    nn::FeatureMap<Scalar> logits = head_.forward(h, mode);
    const Scalar clip = Scalar(kLogitClip);
    if (mode == nn::Mode::train) logits_ = logits.data;
    logits.data = logits.data.cwiseMax(-clip).cwiseMin(clip);
    logits.data = (Scalar(1) / (Scalar(1) + (-logits.data.array()).exp())).matrix();
    if (mode == nn::Mode::train) probs_ = logits.data;
    return logits;
  }

  /// Accumulates parameter gradients from d(loss)/d(probabilities).
  void backward(const nn::FeatureMap<Scalar>& grad_probs) {
    nn::FeatureMap<Scalar> g = grad_probs;
    const Scalar clip = Scalar(kLogitClip);
    g.data = (g.data.array() * probs_.array() * (Scalar(1) - probs_.array())).matrix();
    g.data = (logits_.array().abs() < clip).select(g.data, Scalar(0));
    g = head_.backward(g);
    std::array<nn::FeatureMap<Scalar>, kEncoderStages> skip_grads;
    for (int i = kEncoderStages - 1; i >= 0; --i) {
      auto [gx, gskip] = decoder_[i].backward(g);
      if (i < kEncoderStages - 1) skip_grads[3 - i] = std::move(gskip);
      g = std::move(gx);
    }
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      const bool stage_end = i + 1 == blocks_.size() || block_stage_[i + 1] != block_stage_[i];
      if (stage_end && block_stage_[i] < kEncoderStages - 1) g.data += skip_grads[block_stage_[i]].data;
      g = blocks_[i].backward(g);
    }
    stem_.backward(g);
  }

 private:
  ModelConfig config_;
  nn::ConvNormAct<Scalar> stem_;
  std::vector<InvertedResidual<Scalar>> blocks_;
  std::vector<int> block_stage_;
  std::array<int, kEncoderStages> stage_channels_{};
  std::vector<DecoderBlock<Scalar>> decoder_;
  nn::Conv2d<Scalar> head_;
  nn::Matrix<Scalar> logits_;
  nn::Matrix<Scalar> probs_;
};

extern template class SegmentationModel<float>;

/// Builds and initializes a float model.
SegmentationModel<float> build_model(const ModelConfig& config, std::uint64_t seed);

/// Packs equally sized slices into a (channels x N*H*W) batch. Grayscale
/// slices are replicated when the model expects three channels.
template <typename Scalar>
nn::FeatureMap<Scalar> pack_batch(const std::vector<const Image2*>& images, int channels = 1) {
  if (images.empty()) throw InvalidArgument("empty batch");
  const int h = static_cast<int>(images.front()->rows());
  const int w = static_cast<int>(images.front()->cols());
  nn::FeatureMap<Scalar> x(channels, static_cast<int>(images.size()), h, w);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image2& img = *images[n];
    if (img.rows() != h || img.cols() != w) throw InvalidArgument("batch slices differ in shape");
    for (int c = 0; c < channels; ++c) {
      Scalar* d = x.data.row(c).data() + static_cast<Eigen::Index>(n) * h * w;
      for (int r = 0; r < h; ++r)
        for (int q = 0; q < w; ++q) d[static_cast<Eigen::Index>(r) * w + q] = static_cast<Scalar>(img(r, q));
    }
  }
  return x;
}

/// Extracts sample `n` of row `channel` as a (H x W) 2D grid.
template <typename Scalar>
Grid2<Scalar> unpack_sample(const nn::FeatureMap<Scalar>& x, int n, int channel = 0) {
  Grid2<Scalar> out(x.height, x.width);
  const Scalar* s = x.data.row(channel).data() + static_cast<Eigen::Index>(n) * x.plane();
  for (int r = 0; r < x.height; ++r)
    for (int q = 0; q < x.width; ++q) out(r, q) = s[static_cast<Eigen::Index>(r) * x.width + q];
  return out;
}

}  // namespace planeseg
