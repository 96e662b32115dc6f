#include <cmath>

#include "doctest.h"
#include "duat/encoder.hpp"
#include "duat/reference.hpp"

using namespace duat;

TEST_SUITE_BEGIN("encoder");

TEST_CASE("pyramid shape law for 64/96/128 inputs") {
  Rng rng(1);
  EncoderConfig cfg = EncoderConfig::tiny();
  PvtEncoder enc(cfg, rng);
  for (int size : {64, 96, 128}) {
    Tensor x = Tensor::uniform(Shape{1, 3, size, size}, 0.0, 1.0, rng);
    FeaturePyramid p = enc.forward(x);
    CHECK(p.f1.shape() == Shape{1, cfg.dims[0], size / 4, size / 4});
    CHECK(p.f2.shape() == Shape{1, cfg.dims[1], size / 8, size / 8});
    CHECK(p.f3.shape() == Shape{1, cfg.dims[2], size / 16, size / 16});
    CHECK(p.f4.shape() == Shape{1, cfg.dims[3], size / 32, size / 32});
  }
  CHECK_THROWS_AS(enc.forward(Tensor::zeros(Shape{1, 3, 60, 64})), ShapeError);
  CHECK_THROWS_AS(enc.forward(Tensor::zeros(Shape{1, 1, 64, 64})), ShapeError);
}

TEST_CASE("config validation catches bad stage settings") {
  EncoderConfig cfg = EncoderConfig::tiny();
  cfg.heads = {3, 2, 4, 8};  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = EncoderConfig::tiny();
  cfg.sr_ratios = {6, 4, 2, 1};
  CHECK_THROWS_AS(cfg.validate(), DataError);
  cfg = EncoderConfig::tiny();
  cfg.depths = {1, 1, 1};
  CHECK_THROWS_AS(cfg.validate(), DataError);
}

TEST_CASE("patch embed stride arithmetic and channel width") {
  Rng rng(2);
  PatchEmbed stage1(3, 32, 7, 4, rng);
  Tensor x = Tensor::uniform(Shape{2, 3, 64, 64}, 0.0, 1.0, rng);
  Tensor y = stage1.forward(x);
  CHECK(y.shape() == Shape{2, 32, 16, 16});
  CHECK_THROWS_AS(stage1.forward(Tensor::zeros(Shape{1, 3, 30, 30})), ShapeError);
}

TEST_CASE("attention over a single token is value projection plus residual") {
  Rng rng(3);
  SrAttention attn(8, 2, 1, rng);
  Tensor x = Tensor::normal(Shape{1, 8, 1, 1}, 0.0, 1.0, rng);
  Tensor got = attn.forward(x);
  // With one token the softmax weight is 1, so the output reduces to
  // x + out_proj(v_proj(norm(x))).
  Tensor z = attn.norm.forward(x);
  Tensor manual = ops::add(x, attn.out_proj.forward(attn.v_proj.forward(z)));
  for (std::int64_t i = 0; i < got.numel(); ++i) {
    CHECK(got.data()[i] == doctest::Approx(manual.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("attention rows sum to 1 on an 8x8 grid") {
  Rng rng(4);
  // Reach inside by reproducing the row softmax: rely on the op invariant
  // via a small wrapper around the same projections.
  SrAttention attn(16, 4, 2, rng);
  Tensor x = Tensor::normal(Shape{2, 16, 8, 8}, 0.0, 1.0, rng);
  Tensor y = attn.forward(x);
  CHECK(y.shape() == x.shape());
  // The softmax invariant itself is covered in the ops suite; here we check
  // the module accepts the grid and stays finite.
  check_all_finite(y, "attention output");
}

TEST_CASE("reduction=1 attention matches the dense per-head oracle") {
  Rng rng(5);
  const int dim = 12, heads = 3, h = 4, w = 4, t = h * w, dh = dim / heads;
  SrAttention attn(dim, heads, 1, rng);
  Tensor x = Tensor::normal(Shape{1, dim, h, w}, 0.0, 1.0, rng);
  Tensor got = attn.forward(x);

  // Oracle: explicit loops over heads/tokens on the same projections.
  Tensor z = attn.norm.forward(x);
  Tensor q = attn.q_proj.forward(z);
  Tensor k = attn.k_proj.forward(z);
  Tensor v = attn.v_proj.forward(z);
  auto rows = [&](const Tensor& m) {
    // (1, heads*dh, h, w) -> (heads, t, dh) row-major
    std::vector<double> out(static_cast<std::size_t>(heads) * t * dh);
    for (int hd = 0; hd < heads; ++hd) {
      for (int d = 0; d < dh; ++d) {
        for (int i = 0; i < t; ++i) {
          out[(static_cast<std::size_t>(hd) * t + i) * dh + d] =
              m.data()[(hd * dh + d) * t + i];
        }
      }
    }
    return out;
  };
  std::vector<double> qr = rows(q), kr = rows(k), vr = rows(v);
  std::vector<double> attn_out(static_cast<std::size_t>(heads) * t * dh);
  ref::dense_attention(qr.data(), kr.data(), vr.data(), attn_out.data(), heads, t, dh);
  // Back to (1, dim, h, w) then the output projection and residual.
  Tensor merged = Tensor::zeros(Shape{1, dim, h, w});
  for (int hd = 0; hd < heads; ++hd) {
    for (int d = 0; d < dh; ++d) {
      for (int i = 0; i < t; ++i) {
        merged.mutable_data()[(hd * dh + d) * t + i] =
            attn_out[(static_cast<std::size_t>(hd) * t + i) * dh + d];
      }
    }
  }
  Tensor want = ops::add(x, attn.out_proj.forward(merged));
  double m = 0.0;
  for (std::int64_t i = 0; i < got.numel(); ++i) {
    m = std::max(m, std::abs(got.data()[i] - want.data()[i]));
  }
  CHECK(m < 1e-10);
}

TEST_CASE("grid not divisible by the reduction is rejected") {
  Rng rng(6);
  SrAttention attn(8, 2, 4, rng);
  CHECK_THROWS_AS(attn.forward(Tensor::zeros(Shape{1, 8, 6, 6})), ShapeError);
}

TEST_CASE("batch permutation permutes outputs identically") {
  Rng rng(7);
  PvtEncoder enc(EncoderConfig::tiny(), rng);
  Tensor a = Tensor::uniform(Shape{1, 3, 64, 64}, 0.0, 1.0, rng);
  Tensor b = Tensor::uniform(Shape{1, 3, 64, 64}, 0.0, 1.0, rng);
  Tensor ab = Tensor::zeros(Shape{2, 3, 64, 64});
  Tensor ba = Tensor::zeros(Shape{2, 3, 64, 64});
  const std::int64_t per = a.numel();
  std::copy(a.data(), a.data() + per, ab.mutable_data());
  std::copy(b.data(), b.data() + per, ab.mutable_data() + per);
  std::copy(b.data(), b.data() + per, ba.mutable_data());
  std::copy(a.data(), a.data() + per, ba.mutable_data() + per);
  FeaturePyramid p_ab = enc.forward(ab);
  FeaturePyramid p_ba = enc.forward(ba);
  const std::int64_t f1 = p_ab.f1.numel() / 2;
  for (std::int64_t i = 0; i < f1; ++i) {
    CHECK(p_ab.f1.data()[i] == p_ba.f1.data()[f1 + i]);
    CHECK(p_ab.f1.data()[f1 + i] == p_ba.f1.data()[i]);
  }
}

TEST_CASE("encode is deterministic under a fixed seed") {
  auto run = [] {
    Rng rng(99);
    PvtEncoder enc(EncoderConfig::tiny(), rng);
    Tensor x = Tensor::uniform(Shape{1, 3, 64, 64}, 0.0, 1.0, rng);
    FeaturePyramid p = enc.forward(x);
    return p.f4.values();
  };
  CHECK(run() == run());
}

TEST_SUITE_END();
