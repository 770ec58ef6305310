// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "planeseg/augment.hpp"
#include "support.hpp"

using namespace planeseg;

namespace {

Image2 noise(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Image2 im(r, c);
  for (Eigen::Index i = 0; i < im.size(); ++i) im.data()[i] = u(rng);
  return im;
}

Mask2 blob(int r, int c) {
  Mask2 m = Mask2::Zero(r, c);
  m.block(r / 4, c / 3, r / 2, c / 3).setOnes();
  return m;
}

bool binary(const Mask2& m) { return ((m == 0) || (m == 1)).all(); }

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("resize2d reaches the target and is identity at the same size") {
    const Image2 im = noise(100, 120, 1);
    const Image2 big = resize2d(im, 576, Resize2D::bilinear);
    CHECK(big.rows() == 576);
    CHECK(big.cols() == 576);
    const Image2 sq = noise(40, 40, 2);
    CHECK((resize2d(sq, 40, Resize2D::bilinear) == sq).all());
    CHECK((resize2d(sq, 40, Resize2D::nearest) == sq).all());
    CHECK_THROWS_AS(resize2d(sq, 0, Resize2D::nearest), InvalidArgument);
  }

  TEST_CASE("nearest resize keeps masks binary") {
    const Mask2 m = blob(37, 53);
    for (int size : {16, 64, 576}) CHECK(binary(resize2d(m, size, Resize2D::nearest)));
  }

  TEST_CASE("bilinear resize of a constant image is constant") {
    Image2 c = Image2::Constant(13, 29, 0.3f);
    const Image2 r = resize2d(c, 50, Resize2D::bilinear);
    CHECK((r - 0.3f).abs().maxCoeff() < 1e-6f);
  }

  TEST_CASE("center crop 576 to 512 starts at (32, 32)") {
    Image2 im = Image2::Zero(576, 576);
    im(32, 32) = 1.0f;
    im(543, 543) = 2.0f;
    const Image2 c = center_crop(im, 512);
    CHECK(c.rows() == 512);
    CHECK(c(0, 0) == 1.0f);
    CHECK(c(511, 511) == 2.0f);
    CHECK(c.sum() == 3.0f);
    CHECK((center_crop(im, 576) == im).all());
    CHECK_THROWS_AS(center_crop(im, 577), InvalidArgument);
  }

  TEST_CASE("uncrop pads with zeros around the window") {
    const Image2 c = Image2::Ones(512, 512);
    const Image2 full = uncrop(c, 576, 576);
    CHECK(full.sum() == doctest::Approx(512.0 * 512.0));
    CHECK(full(31, 40) == 0.0f);
    CHECK(full(32, 32) == 1.0f);
    CHECK((center_crop(full, 512) == c).all());
  }

  TEST_CASE("flip probabilities zero leave inputs untouched") {
    AugmentConfig cfg;
    cfg.p_hflip = 0;
    cfg.p_vflip = 0;
    std::mt19937_64 rng(4);
    const Image2 im = noise(12, 14, 3);
    const Mask2 m = blob(12, 14);
    for (int i = 0; i < 20; ++i) {
      auto [a, b] = random_flip(im, m, cfg, rng);
      CHECK((a == im).all());
      CHECK((b == m).all());
    }
  }

  TEST_CASE("flips are involutions and lock image to mask") {
    AugmentConfig cfg;
    cfg.p_hflip = 1;
    cfg.p_vflip = 1;
    std::mt19937_64 rng(5);
    const Image2 im = noise(12, 14, 4);
    Mask2 m = blob(12, 14);
    m(0, 0) = 1;
    auto [a, b] = random_flip(im, m, cfg, rng);
    CHECK_FALSE((a == im).all());
    CHECK(b(11, 13) == 1);
    CHECK(a(11, 13) == im(0, 0));
    CHECK(b.cast<int>().sum() == m.cast<int>().sum());
    auto [a2, b2] = random_flip(a, b, cfg, rng);
    CHECK((a2 == im).all());
    CHECK((b2 == m).all());
  }

  TEST_CASE("seeded flip decisions repeat") {
    AugmentConfig cfg;
    std::mt19937_64 r1(77), r2(77);
    int h = 0;
    for (int i = 0; i < 200; ++i) {
      const FlipDecision a = draw_flips(cfg, r1);
      const FlipDecision b = draw_flips(cfg, r2);
      CHECK(a.horizontal == b.horizontal);
      CHECK(a.vertical == b.vertical);
      h += a.horizontal;
    }
    CHECK(h > 60);
    CHECK(h < 140);
  }

  TEST_CASE("train and eval transforms produce binary crops of the configured size") {
    AugmentConfig cfg;
    cfg.resize_to = 72;
    cfg.crop_to = 64;
    SliceRecord rec;
    rec.image = noise(50, 41, 6);
    rec.mask = blob(50, 41);
    auto [e1, m1] = eval_transform(rec, cfg);
    auto [e2, m2] = eval_transform(rec, cfg);
    CHECK(e1.rows() == 64);
    CHECK(e1.cols() == 64);
    CHECK((e1 == e2).all());
    CHECK((m1 == m2).all());
    CHECK(binary(m1));
    std::mt19937_64 rng(8);
    for (int i = 0; i < 10; ++i) {
      auto [t, tm] = train_transform(rec, cfg, rng);
      CHECK(t.rows() == 64);
      CHECK(tm.cols() == 64);
      CHECK(binary(tm));
      CHECK(tm.cast<int>().sum() == m1.cast<int>().sum());
    }
  }

  TEST_CASE("full-size defaults give 512 outputs") {
    AugmentConfig cfg;
    SliceRecord rec;
    rec.image = noise(90, 110, 7);
    rec.mask = blob(90, 110);
    auto [im, m] = eval_transform(rec, cfg);
    CHECK(im.rows() == 512);
    CHECK(m.cols() == 512);
  }

  TEST_CASE("invalid configurations are rejected") {
    AugmentConfig cfg;
    cfg.crop_to = 600;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.p_hflip = 1.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  }
}
