#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "duat/glsa.hpp"

using namespace duat;

TEST_SUITE_BEGIN("glsa");

TEST_CASE("gsa attention weights are positive and sum to 1 per sample") {
  Rng rng(1);
  GsaUnit gsa(32, rng);
  Tensor x = Tensor::normal(Shape{3, 32, 5, 4}, 0.0, 1.0, rng);
  gsa.forward(x);
  Tensor att = gsa.last_attention();
  REQUIRE(att.shape() == Shape{3, 1, 1, 20});
  for (int b = 0; b < 3; ++b) {
    double sum = 0.0;
    for (int i = 0; i < 20; ++i) {
      const double a = att.at(b, 0, 0, i);
      CHECK(a > 0.0);
      sum += a;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("constant input gives a spatially constant additive shift") {
  Rng rng(2);
  GsaUnit gsa(32, rng);
  Tensor x = Tensor::full(Shape{1, 32, 4, 4}, 0.8);
  Tensor y = gsa.forward(x);
  // Softmax over equal logits is uniform, the context equals the channel
  // value, and the same mlp output is added everywhere.
  for (int c = 0; c < 32; ++c) {
    const double first = y.at(0, c, 0, 0);
    for (int i = 0; i < 16; ++i) {
      CHECK(y.at(0, c, i / 4, i % 4) == doctest::Approx(first).epsilon(1e-12));
    }
  }
}

TEST_CASE("gsa with zero-initialized mlp output layer is the exact identity") {
  Rng rng(3);
  GsaUnit gsa(32, rng);
  auto zero = [](Tensor& t) {
    std::fill(t.mutable_data(), t.mutable_data() + t.numel(), 0.0);
  };
  zero(gsa.mlp.fc2.weight);
  zero(gsa.mlp.fc2.bias);
  Tensor x = Tensor::normal(Shape{2, 32, 4, 4}, 0.0, 1.0, rng);
  Tensor y = gsa.forward(x);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("gsa context vector equals the brute-force weighted sum") {
  Rng rng(4);
  const int c = 32, h = 4, w = 5;
  GsaUnit gsa(c, rng);
  // Zero the mlp second layer so output = x + 0; recover the context from a
  // separate manual path instead.
  Tensor x = Tensor::normal(Shape{2, c, h, w}, 0.0, 1.0, rng);
  gsa.forward(x);
  Tensor att = gsa.last_attention();
  // context[b][ch] = sum_p att[b][p] * x[b][ch][p]
  for (int b = 0; b < 2; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      double want = 0.0;
      for (int p = 0; p < h * w; ++p) {
        want += att.at(b, 0, 0, p) * x.at(b, ch, p / w, p % w);
      }
      // Reconstruct the module's context through the same ops path.
      Tensor feats = ops::reshape(x, Shape{2, 1, c, h * w});
      Tensor ctx = ops::matmul(feats, ops::transpose_hw(att));
      CHECK(std::abs(ctx.at(b, 0, ch, 0) - want) < 1e-10);
    }
  }
}

TEST_CASE("lsa gate lies strictly in (0,1) and output matches the gate algebra") {
  Rng rng(5);
  LsaUnit lsa(32, rng);
  Tensor x = Tensor::normal(Shape{1, 32, 6, 6}, 0.0, 1.0, rng);
  Tensor y = lsa.forward(x);
  Tensor gate = lsa.last_attention();
  for (std::int64_t i = 0; i < gate.numel(); ++i) {
    CHECK(gate.data()[i] > 0.0);
    CHECK(gate.data()[i] < 1.0);
    // output - x == gate * x elementwise
    CHECK(std::abs((y.data()[i] - x.data()[i]) - gate.data()[i] * x.data()[i]) < 1e-12);
  }
}

TEST_CASE("lsa output is bounded between x and 2x for non-negative input") {
  Rng rng(6);
  LsaUnit lsa(32, rng);
  Tensor x = Tensor::uniform(Shape{1, 32, 5, 5}, 0.0, 1.0, rng);
  Tensor y = lsa.forward(x);
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[i] >= x.data()[i]);
    CHECK(y.data()[i] <= 2.0 * x.data()[i] + 1e-15);
  }
}

TEST_CASE("lsa of zero input is zero") {
  Rng rng(7);
  LsaUnit lsa(32, rng);
  Tensor x = Tensor::zeros(Shape{1, 32, 4, 4});
  Tensor y = lsa.forward(x);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("glsa output is 32 channels at every level resolution") {
  Rng rng(8);
  GlsaBlock glsa(GlsaArrangement::parallel, rng);
  for (int hw : {8, 4, 2}) {
    Tensor x = Tensor::normal(Shape{2, 64, hw, hw}, 0.0, 1.0, rng);
    CHECK(glsa.forward(x).shape() == Shape{2, 32, hw, hw});
  }
  CHECK_THROWS_AS(glsa.forward(Tensor::zeros(Shape{1, 63, 4, 4})), ShapeError);
}

TEST_CASE("arrangements produce genuinely different outputs") {
  Rng rng(9);
  Tensor x = Tensor::normal(Shape{1, 64, 4, 4}, 0.0, 1.0, rng);
  std::vector<GlsaArrangement> arrangements = {
      GlsaArrangement::parallel, GlsaArrangement::gsa_only, GlsaArrangement::lsa_only,
      GlsaArrangement::serial_gsa_lsa, GlsaArrangement::serial_lsa_gsa};
  std::vector<Tensor> outs;
  for (auto a : arrangements) {
    Rng init = Rng::for_stream(77, 0);  // same init stream for all variants
    GlsaBlock block(a, init);
    outs.push_back(block.forward(x));
  }
  for (std::size_t i = 0; i < outs.size(); ++i) {
    for (std::size_t j = i + 1; j < outs.size(); ++j) {
      double diff = 0.0;
      for (std::int64_t k = 0; k < outs[i].numel(); ++k) {
        diff = std::max(diff, std::abs(outs[i].data()[k] - outs[j].data()[k]));
      }
      CHECK(diff > 0.0);
    }
  }
}

TEST_CASE("arrangement names parse both ways") {
  for (const char* name :
       {"parallel", "gsa_only", "lsa_only", "serial_gsa_lsa", "serial_lsa_gsa"}) {
    CHECK(arrangement_name(parse_arrangement(name)) == name);
  }
  CHECK_THROWS_AS(parse_arrangement("diagonal"), DataError);
}

TEST_SUITE_END();
