#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "duat/gradcheck.hpp"
#include "duat/kernels.hpp"
#include "duat/ops.hpp"
#include "duat/reference.hpp"

using namespace duat;

namespace {

Tensor random_tensor(Shape s, Rng& rng, bool requires_grad = false) {
  return Tensor::normal(s, 0.0, 1.0, rng, requires_grad);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  }
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("ops");

TEST_CASE("elementwise basics") {
  Tensor a = Tensor::from_vector(Shape{1, 1, 1, 2}, {2, 3});
  Tensor b = Tensor::from_vector(Shape{1, 1, 1, 2}, {4, 5});
  Tensor m = ops::mul(a, b);
  CHECK(m.data()[0] == 8.0);
  CHECK(m.data()[1] == 15.0);

  Tensor x = Tensor::full(Shape{1, 1, 1, 1}, 0.25);
  CHECK(ops::one_minus(x).item() == 0.75);

  CHECK_THROWS_AS(ops::add(a, Tensor::zeros(Shape{1, 1, 1, 3})), ShapeError);
}

TEST_CASE("d(mul)/da matches finite differences") {
  Tensor a = Tensor::full(Shape{1, 1, 1, 1}, 2.0, true);
  Tensor b = Tensor::full(Shape{1, 1, 1, 1}, 5.0);
  GradCheckResult r = gradcheck("mul", [&] { return ops::sum_all(ops::mul(a, b)); }, {a});
  CHECK(r.max_rel_error < 1e-8);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(ops::sum_all(ops::mul(a, b)));
  }
  CHECK(a.grad()[0] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("matmul identity and 1x2 * 2x1") {
  Rng rng(3);
  Tensor id = Tensor::zeros(Shape{1, 1, 3, 3});
  for (int i = 0; i < 3; ++i) id.mutable_data()[i * 3 + i] = 1.0;
  Tensor b = random_tensor(Shape{1, 1, 3, 4}, rng);
  CHECK(max_abs_diff(ops::matmul(id, b), b) == 0.0);

  Tensor u = Tensor::from_vector(Shape{1, 1, 1, 2}, {1, 2});
  Tensor v = Tensor::from_vector(Shape{1, 1, 2, 1}, {3, 4});
  CHECK(ops::matmul(u, v).item() == 11.0);

  CHECK_THROWS_AS(ops::matmul(b, b), ShapeError);
}

TEST_CASE("matmul equals the triple-loop reference on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 12; ++trial) {
    const int batch = rng.uniform_int(1, 3);
    const int p = rng.uniform_int(1, 6), k = rng.uniform_int(1, 6), q = rng.uniform_int(1, 6);
    Tensor a = random_tensor(Shape{batch, 1, p, k}, rng);
    Tensor b = random_tensor(Shape{batch, 1, k, q}, rng);
    Tensor got = ops::matmul(a, b);
    std::vector<double> want(static_cast<std::size_t>(batch) * p * q);
    ref::matmul(a.data(), b.data(), want.data(), batch, p, k, q, false, false);
    double m = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
      m = std::max(m, std::abs(got.data()[i] - want[i]));
    }
    CHECK(m < 1e-12);
  }
}

TEST_CASE("transposed matmul kernels agree with the reference") {
  Rng rng(11);
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      const int batch = 2, p = 3, k = 4, q = 5;
      std::vector<double> a(static_cast<std::size_t>(batch) * p * k);
      std::vector<double> b(static_cast<std::size_t>(batch) * k * q);
      for (auto& v : a) v = rng.normal();
      for (auto& v : b) v = rng.normal();
      std::vector<double> got(static_cast<std::size_t>(batch) * p * q);
      std::vector<double> want(got.size());
      kernels::matmul(a.data(), b.data(), got.data(), batch, p, k, q, ta, tb);
      ref::matmul(a.data(), b.data(), want.data(), batch, p, k, q, ta, tb);
      double m = 0.0;
      for (std::size_t i = 0; i < got.size(); ++i) m = std::max(m, std::abs(got[i] - want[i]));
      CHECK(m < 1e-12);
    }
  }
}

TEST_CASE("softmax normalization, closed forms, positivity") {
  Tensor c = Tensor::full(Shape{1, 1, 1, 4}, 3.25);
  Tensor sc = ops::softmax(c, 3);
  for (int i = 0; i < 4; ++i) CHECK(sc.data()[i] == doctest::Approx(0.25).epsilon(1e-12));

  Tensor two = Tensor::from_vector(Shape{1, 1, 1, 2}, {0.0, std::log(3.0)});
  Tensor st = ops::softmax(two, 3);
  CHECK(st.data()[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(st.data()[1] == doctest::Approx(0.75).epsilon(1e-9));

  Rng rng(9);
  Tensor x = random_tensor(Shape{2, 3, 4, 5}, rng);
  for (int axis = 0; axis < 4; ++axis) {
    Tensor y = ops::softmax(x, axis);
    const int dims[4] = {2, 3, 4, 5};
    // Sum along the axis must be 1 for every slice; all entries positive.
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] > 0.0);
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= dims[i];
    for (int i = axis + 1; i < 4; ++i) inner *= dims[i];
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        double s = 0.0;
        for (int l = 0; l < dims[axis]; ++l) s += y.data()[(o * dims[axis] + l) * inner + in];
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("softmax jacobian matches finite differences on length-5 input") {
  Rng rng(13);
  Tensor x = random_tensor(Shape{1, 1, 1, 5}, rng, true);
  Tensor proj = random_tensor(Shape{1, 1, 1, 5}, rng);
  GradCheckResult r = gradcheck(
      "softmax5", [&] { return ops::sum_all(ops::mul(ops::softmax(x, 3), proj)); }, {x});
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("bilinear resize hand-derived values") {
  Tensor constant = Tensor::full(Shape{1, 2, 3, 3}, 0.7);
  Tensor up = ops::resize_bilinear(constant, 6, 6);
  for (std::int64_t i = 0; i < up.numel(); ++i) {
    CHECK(up.data()[i] == doctest::Approx(0.7).epsilon(1e-12));
  }

  Tensor row = Tensor::from_vector(Shape{1, 1, 1, 2}, {0.0, 1.0});
  Tensor wide = ops::resize_bilinear(row, 1, 4);
  CHECK(wide.data()[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(wide.data()[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(wide.data()[2] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(wide.data()[3] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(ops::resize_bilinear(row, 0, 4), ShapeError);
}

TEST_CASE("resize matches reference on random instances") {
  Rng rng(17);
  for (int trial = 0; trial < 12; ++trial) {
    const int hi = rng.uniform_int(1, 8), wi = rng.uniform_int(1, 8);
    const int ho = rng.uniform_int(1, 12), wo = rng.uniform_int(1, 12);
    Tensor x = random_tensor(Shape{2, 2, hi, wi}, rng);
    Tensor got = ops::resize_bilinear(x, ho, wo);
    std::vector<double> want(static_cast<std::size_t>(2) * 2 * ho * wo);
    ref::resize_bilinear_forward(x.data(), want.data(), 4, hi, wi, ho, wo);
    double m = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
      m = std::max(m, std::abs(got.data()[i] - want[i]));
    }
    CHECK(m < 1e-12);
  }
}

TEST_CASE("split/concat round trip is bit-exact") {
  Rng rng(21);
  Tensor x = random_tensor(Shape{2, 64, 3, 3}, rng);
  auto [a, b] = ops::split_channels(x, 32);
  CHECK(a.c() == 32);
  CHECK(b.c() == 32);
  Tensor back = ops::concat_channels({a, b});
  CHECK(max_abs_diff(back, x) == 0.0);

  for (int k = 1; k < 6; ++k) {
    Tensor y = random_tensor(Shape{1, 6, 2, 2}, rng);
    auto [lo, hi] = ops::split_channels(y, k);
    CHECK(max_abs_diff(ops::concat_channels({lo, hi}), y) == 0.0);
  }
  CHECK_THROWS_AS(ops::split_channels(x, 0), ShapeError);
  CHECK_THROWS_AS(ops::split_channels(x, 64), ShapeError);
}

TEST_CASE("gradient of sum(second half) is zero on the first half") {
  Rng rng(23);
  Tensor x = random_tensor(Shape{1, 6, 2, 2}, rng, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    auto [first, second] = ops::split_channels(x, 3);
    (void)first;
    tape.backward(ops::sum_all(second));
  }
  const auto& g = x.grad();
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 4; ++i) CHECK(g[static_cast<std::size_t>(c) * 4 + i] == 0.0);
  }
  for (int c = 3; c < 6; ++c) {
    for (int i = 0; i < 4; ++i) CHECK(g[static_cast<std::size_t>(c) * 4 + i] == 1.0);
  }
}

TEST_CASE("a corrupted backward rule is caught by the checker") {
  Rng rng(29);
  Tensor x = random_tensor(Shape{1, 1, 2, 2}, rng, true);
  // Forward is y = 2x but the recorded rule claims dy/dx = 2.5.
  auto broken_double = [&](const Tensor& in) {
    Tensor out = make_tensor(in.shape(), grad_enabled({&in}));
    for (std::int64_t i = 0; i < in.numel(); ++i) out.mutable_data()[i] = 2.0 * in.data()[i];
    if (out.requires_grad()) {
      Tape::current()->record(out, [ii = in.impl_ptr(), oi = out.impl_ptr()] {
        auto& g = ensure_grad(*ii);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.5 * oi->grad[i];
      });
    }
    return out;
  };
  GradCheckResult r = gradcheck("broken", [&] { return ops::sum_all(broken_double(x)); }, {x});
  CHECK_FALSE(r.passed());
}

TEST_CASE("gradcheck suite covers every registered differentiable op") {
  auto cases = gradcheck_suite(123);
  std::vector<std::string> names;
  for (const auto& c : cases) names.push_back(c.name);
  for (const char* required :
       {"elementwise.add", "elementwise.sub", "elementwise.mul", "elementwise.add_bias",
        "elementwise.mul_context", "elementwise.neg", "elementwise.one_minus",
        "elementwise.scalar_ops", "activation.relu", "activation.sigmoid", "reduce.sum_all",
        "view.reshape", "view.transpose_hw", "matmul.batched", "softmax.axis_c",
        "softmax.axis_w", "resize.up", "resize.down", "channels.split_concat",
        "conv2d.pointwise", "conv2d.strided_padded", "conv2d.depthwise", "conv2d.grouped",
        "norm.batchnorm_train", "norm.batchnorm_eval", "norm.layernorm", "nn.mlp_expand2",
        "encoder.patch_embed", "encoder.sr_attention", "encoder.block", "glsa.gsa", "glsa.lsa",
        "glsa.parallel", "glsa.serial", "sba.rau", "sba.semantic_fuse", "sba.block",
        "loss.weighted_bce", "loss.weighted_iou", "loss.structure", "model.full_tiny"}) {
    CAPTURE(required);
    CHECK(std::find(names.begin(), names.end(), required) != names.end());
  }
}

TEST_CASE("core op gradchecks pass at 1e-4") {
  // The full table runs in the acceptance suite; spot-check the primitive
  // ops here so unit failures localize.
  auto cases = gradcheck_suite(2024);
  int run = 0;
  for (auto& c : cases) {
    if (c.name.rfind("elementwise.", 0) == 0 || c.name.rfind("view.", 0) == 0 ||
        c.name.rfind("softmax.", 0) == 0 || c.name.rfind("resize.", 0) == 0 ||
        c.name == "matmul.batched" || c.name == "channels.split_concat" ||
        c.name.rfind("activation.", 0) == 0 || c.name == "reduce.sum_all") {
      GradCheckResult r = c.run();
      CAPTURE(c.name);
      CHECK(r.passed());
      ++run;
    }
  }
  CHECK(run >= 15);
}

TEST_SUITE_END();
