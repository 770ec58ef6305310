// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <functional>

#include "planeseg/network.hpp"
#include "planeseg/optimizer.hpp"
#include "planeseg/pipeline.hpp"
#include "support.hpp"

using namespace planeseg;
using FM = nn::FeatureMap<double>;

namespace {

// Frozen output of tests/oracles/param_count.py.
constexpr std::int64_t kOracleWidth1 = 4003393;
constexpr std::int64_t kOracleWidth1DecoderBn = 4004385;
constexpr std::int64_t kOracleDesk = 282561;

ModelConfig desk() {
  ModelConfig c;
  c.width_mult = 0.25;
  c.decoder_channels = {64, 32, 24, 16, 8};
  return c;
}

ModelConfig tiny() {
  ModelConfig c;
  c.width_mult = 0.25;
  c.decoder_channels = {8, 8, 8, 8, 4};
  return c;
}

FM random_map(int c, int n, int h, int w, std::mt19937_64& rng, double scale = 1.0) {
  FM x(c, n, h, w);
  std::normal_distribution<double> d(0.0, scale);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = d(rng);
  return x;
}

double dot(const FM& a, const FM& b) { return (a.data.array() * b.data.array()).sum(); }

// Relative error between analytic and numeric values, robust near zero.
double rel_err(double a, double n) { return std::abs(a - n) / std::max({1e-6, std::abs(a), std::abs(n)}); }

struct LayerProbe {
  std::function<FM(const FM&)> forward;
  std::function<FM(const FM&)> backward;
  std::vector<nn::Parameter<double>*> params;
};

// Central differences of L = <r, f(x)> against backward(r), over the input
// and every parameter entry. Each error is scaled by the largest analytic
// entry of its tensor, since FD noise swamps entries that are nearly zero.
double max_layer_error(LayerProbe& probe, FM x, std::mt19937_64& rng) {
  const FM y = probe.forward(x);
  const FM r = random_map(y.channels(), y.batch, y.height, y.width, rng);
  for (auto* p : probe.params) p->zero_grad();
  const FM dx = probe.backward(r);
  const double h = 1e-6;
  double worst = 0.0;
  auto loss = [&](const FM& in) { return dot(r, probe.forward(in)); };
  auto sweep = [&](double* values, const double* grad, Eigen::Index n) {
    double scale = 1e-6;
    for (Eigen::Index i = 0; i < n; ++i) scale = std::max(scale, std::abs(grad[i]));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double keep = values[i];
      values[i] = keep + h;
      const double up = loss(x);
      values[i] = keep - h;
      const double dn = loss(x);
      values[i] = keep;
      worst = std::max(worst, std::abs(grad[i] - (up - dn) / (2 * h)) / scale);
    }
  };
  sweep(x.data.data(), dx.data.data(), x.data.size());
  for (auto* p : probe.params) {
    const nn::Matrix<double> grad = p->grad;
    sweep(p->value.data(), grad.data(), grad.size());
  }
  return worst;
}

template <typename Layer>
LayerProbe probe_of(Layer& layer) {
  LayerProbe p;
  p.forward = [&layer](const FM& x) { return layer.forward(x, nn::Mode::train); };
  p.backward = [&layer](const FM& dy) { return layer.backward(dy); };
  nn::Registry<double> reg;
  layer.collect(reg);
  p.params = reg.params;
  return p;
}

template <typename Layer>
void randomize(Layer& layer, std::mt19937_64& rng) {
  nn::Registry<double> reg;
  layer.collect(reg);
  for (auto* p : reg.params) nn::init_normal(p->value, 0.5, rng);
}

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("parameter count agrees with the per-layer oracle") {
    ModelConfig full;
    auto m = build_model(full, 0);
    const double ratio = static_cast<double>(m.parameter_count()) / kOracleWidth1;
    CHECK(ratio > 0.85);
    CHECK(ratio < 1.15);
    CHECK(m.parameter_count() == kOracleWidth1);
    full.decoder_batch_norm = true;
    CHECK(build_model(full, 0).parameter_count() == kOracleWidth1DecoderBn);
    CHECK(build_model(desk(), 0).parameter_count() == kOracleDesk);
  }

  TEST_CASE("width 0.25 maps 64x64 inputs to 64x64 probabilities") {
    auto m = build_model(desk(), 1);
    std::mt19937_64 rng(1);
    std::vector<Image2> imgs(3, Image2(64, 64));
    std::uniform_real_distribution<float> u(0, 1);
    for (auto& im : imgs)
      for (Eigen::Index i = 0; i < im.size(); ++i) im.data()[i] = u(rng);
    std::vector<const Image2*> ptr{&imgs[0], &imgs[1], &imgs[2]};
    const auto y = m.forward(pack_batch<float>(ptr), nn::Mode::eval);
    CHECK(y.channels() == 1);
    CHECK(y.batch == 3);
    CHECK(y.height == 64);
    CHECK(y.width == 64);
    CHECK(y.data.minCoeff() > 0.0f);
    CHECK(y.data.maxCoeff() < 1.0f);
  }

  TEST_CASE("batch of two at 512 squared") {
    auto m = build_model(desk(), 2);
    std::mt19937_64 rng(2);
    const auto x = random_map(1, 2, 512, 512, rng).data.cast<float>().eval();
    nn::FeatureMap<float> in(1, 2, 512, 512);
    in.data = x;
    const auto y = m.forward(in, nn::Mode::eval);
    CHECK(y.batch == 2);
    CHECK(y.height == 512);
    CHECK(y.data.minCoeff() > 0.0f);
    CHECK(y.data.maxCoeff() < 1.0f);
  }

  TEST_CASE("indivisible or mis-channelled inputs are rejected") {
    auto m = build_model(desk(), 3);
    CHECK_THROWS_AS(m.forward(nn::FeatureMap<float>(1, 1, 100, 100), nn::Mode::eval), InvalidArgument);
    CHECK_THROWS_AS(m.forward(nn::FeatureMap<float>(3, 1, 64, 64), nn::Mode::eval), InvalidArgument);
    ModelConfig bad = desk();
    bad.decoder_channels = {8, 8};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  }

  TEST_CASE("zero input gives a spatially constant map") {
    auto m = build_model(desk(), 4);
    const auto y = m.forward(nn::FeatureMap<float>(1, 1, 64, 64), nn::Mode::eval);
    CHECK(y.data.maxCoeff() - y.data.minCoeff() < 1e-5f);
  }

  TEST_CASE("same seed, same parameters; other seed differs") {
    auto a = build_model(desk(), 9);
    auto b = build_model(desk(), 9);
    auto c = build_model(desk(), 10);
    auto ra = a.registry(), rb = b.registry(), rc = c.registry();
    bool all_same = true, any_diff = false;
    for (std::size_t i = 0; i < ra.params.size(); ++i) {
      all_same = all_same && ra.params[i]->value == rb.params[i]->value;
      any_diff = any_diff || ra.params[i]->value != rc.params[i]->value;
    }
    CHECK(all_same);
    CHECK(any_diff);
  }

  TEST_CASE("replicated three-channel input") {
    ModelConfig c = desk();
    c.replicate_to_3ch = true;
    auto m = build_model(c, 5);
    Image2 im = Image2::Constant(32, 32, 0.5f);
    std::vector<const Image2*> ptr{&im};
    const auto x = pack_batch<float>(ptr, 3);
    CHECK(x.channels() == 3);
    CHECK(m.forward(x, nn::Mode::eval).height == 32);
  }

  TEST_CASE("dense convolution gradients") {
    std::mt19937_64 rng(11);
    for (int k : {1, 3})
      for (int stride : {1, 2}) {
        CAPTURE(k);
        CAPTURE(stride);
        nn::Conv2d<double> conv("c", 3, 4, k, stride, true);
        randomize(conv, rng);
        auto probe = probe_of(conv);
        CHECK(max_layer_error(probe, random_map(3, 2, 6, 6, rng), rng) < 1e-6);
      }
  }

  TEST_CASE("depthwise convolution gradients") {
    std::mt19937_64 rng(12);
    for (int stride : {1, 2})
      for (int size : {5, 6}) {
        CAPTURE(stride);
        CAPTURE(size);
        nn::DepthwiseConv3x3<double> dw("d", 3, stride);
        randomize(dw, rng);
        auto probe = probe_of(dw);
        CHECK(max_layer_error(probe, random_map(3, 2, size, size + 1, rng), rng) < 1e-6);
      }
  }

  TEST_CASE("batch norm gradients in training mode") {
    std::mt19937_64 rng(13);
    nn::BatchNorm<double> bn("b", 3);
    randomize(bn, rng);
    auto probe = probe_of(bn);
    CHECK(max_layer_error(probe, random_map(3, 2, 4, 5, rng, 2.0), rng) < 1e-5);
  }

  TEST_CASE("batch norm eval mode uses running statistics") {
    std::mt19937_64 rng(14);
    nn::BatchNorm<double> bn("b", 2, 1.0);
    const FM x = random_map(2, 3, 4, 4, rng, 3.0);
    bn.forward(x, nn::Mode::train);
    const FM y = bn.forward(x, nn::Mode::eval);
    // Momentum 1 stores the batch statistics (unbiased variance), so eval is
    // close to but not exactly train-mode output.
    CHECK(std::abs(y.data.row(0).mean()) < 1e-9);
  }

  TEST_CASE("inverted residual and decoder block gradients") {
    std::mt19937_64 rng(15);
    {
      InvertedResidual<double> block("r", 4, 4, 1, 6, true);
      randomize(block, rng);
      auto probe = probe_of(block);
      CHECK(block.residual());
      CHECK(max_layer_error(probe, random_map(4, 2, 4, 4, rng), rng) < 1e-4);
    }
    {
      InvertedResidual<double> block("s", 4, 6, 2, 6, true);
      randomize(block, rng);
      auto probe = probe_of(block);
      CHECK_FALSE(block.residual());
      CHECK(max_layer_error(probe, random_map(4, 2, 4, 4, rng), rng) < 1e-4);
    }
    {
      DecoderBlock<double> dec("u", 3, 2, 4, false);
      randomize(dec, rng);
      const FM skip = random_map(2, 2, 6, 6, rng);
      LayerProbe p;
      p.forward = [&](const FM& x) { return dec.forward(x, skip, nn::Mode::train); };
      p.backward = [&](const FM& dy) { return dec.backward(dy).first; };
      nn::Registry<double> reg;
      dec.collect(reg);
      p.params = reg.params;
      CHECK(max_layer_error(p, random_map(3, 2, 3, 3, rng), rng) < 1e-4);
    }
  }

  TEST_CASE("whole-model gradient in double precision") {
    ModelConfig cfg = tiny();
    SegmentationModel<double> model(cfg);
    model.initialize(21);
    std::mt19937_64 rng(22);
    // Zero biases leave whole regions sitting exactly on a ReLU kink, where
    // central differences see half a slope. Shift them off it.
    for (auto* p : model.registry().params) {
      const bool shift = p->name.ends_with("bias") || p->name.ends_with("beta");
      if (shift) nn::init_uniform(p->value, 0.3, rng);
    }
    // At 32x32 the deepest stage is 1x1, so its BN sees two values per channel
    // and becomes too curved for central differences. 64x64 keeps it sane.
    FM x = random_map(1, 2, 64, 64, rng);
    const FM y = model.forward(x, nn::Mode::train);
    const FM r = random_map(1, 2, 64, 64, rng);
    model.zero_grad();
    model.backward(r);
    auto params = model.registry().params;
    std::vector<nn::Matrix<double>> grads;
    for (auto* p : params) grads.push_back(p->grad);

    auto loss = [&] { return dot(r, model.forward(x, nn::Mode::train)); };
    // Thousands of activations hang off each early weight, and any ReLU kink
    // crossed inside the stencil biases the estimate in proportion to h.
    // 1e-6 is off by about 1%, 1e-8 is clean.
    const double h = 1e-8;

    // Directional derivative along a random unit direction over all parameters.
    std::normal_distribution<double> nd;
    std::vector<nn::Matrix<double>> dir;
    double analytic = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      nn::Matrix<double> v(params[i]->value.rows(), params[i]->value.cols());
      for (Eigen::Index j = 0; j < v.size(); ++j) v.data()[j] = nd(rng);
      dir.push_back(std::move(v));
    }
    double norm = 0.0;
    for (const auto& v : dir) norm += v.squaredNorm();
    for (std::size_t i = 0; i < params.size(); ++i) {
      dir[i] /= std::sqrt(norm);
      analytic += (dir[i].array() * grads[i].array()).sum();
    }
    auto shift = [&](double s) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->value += s * dir[i];
    };
    shift(h);
    const double up = loss();
    shift(-2 * h);
    const double dn = loss();
    shift(h);
    CHECK(rel_err(analytic, (up - dn) / (2 * h)) < 1e-5);

    // Spot checks: the largest-gradient entry of every tensor.
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      Eigen::Index at = 0;
      Eigen::Map<const Eigen::VectorXd>(grads[i].data(), grads[i].size()).cwiseAbs().maxCoeff(&at);
      double& w = params[i]->value.data()[at];
      const double keep = w;
      w = keep + h;
      const double a = loss();
      w = keep - h;
      const double b = loss();
      w = keep;
      // Some BN shifts feed straight into another BN and have zero gradient;
      // compare those on an absolute scale.
      const double g = grads[i].data()[at];
      worst = std::max(worst, std::abs(g - (a - b) / (2 * h)) / std::max(1.0, std::abs(g)));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("one small optimizer step lowers the training loss") {
    auto model = build_model(desk(), 31);
    TrainConfig tc;
    tc.augment.resize_to = 32;
    tc.augment.crop_to = 32;
    Trainer trainer(model, tc);
    std::vector<Image2> imgs;
    std::vector<Mask2> masks;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 4; ++i) {
      Mask2 m = Mask2::Zero(32, 32);
      m.block(8 + i, 10, 12, 10).setOnes();
      Image2 im = m.cast<float>() * 0.4f + 0.3f;
      imgs.push_back(im);
      masks.push_back(m);
    }
    std::vector<const Image2*> ip;
    std::vector<const Mask2*> mp;
    for (int i = 0; i < 4; ++i) {
      ip.push_back(&imgs[i]);
      mp.push_back(&masks[i]);
    }
    const double before = trainer.step(ip, mp);
    const double after = trainer.step(ip, mp);
    CHECK(after < before);
  }

  TEST_CASE("adam with zero gradient and no decay leaves parameters") {
    nn::Parameter<double> p;
    p.value = nn::Matrix<double>::Constant(2, 2, 1.5);
    p.zero_grad();
    AdamConfig cfg;
    cfg.weight_decay = 0;
    Adam<double> adam(cfg, {&p});
    adam.step();
    CHECK((p.value.array() == 1.5).all());
    Adam<double> fresh(cfg, {&p});
    p.grad.setConstant(2.0);
    fresh.step();
    // The first bias-corrected step moves each entry by about lr.
    CHECK(p.value(0, 0) == doctest::Approx(1.5 - 1e-4).epsilon(1e-6));
  }
}
