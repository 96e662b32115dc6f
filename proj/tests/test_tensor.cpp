#include <cmath>

#include "doctest.h"
#include "duat/ops.hpp"
#include "duat/tensor.hpp"

using namespace duat;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("shape bookkeeping and accessors") {
  Tensor t = Tensor::from_vector(Shape{1, 2, 2, 3}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  CHECK(t.numel() == 12);
  CHECK(t.at(0, 0, 0, 0) == 0.0);
  CHECK(t.at(0, 1, 1, 2) == 11.0);
  CHECK(t.at(0, 0, 1, 1) == 4.0);
  CHECK_THROWS_AS(Tensor::from_vector(Shape{1, 1, 2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("rng streams are deterministic and independent") {
  Rng a = Rng::for_stream(42, 7);
  Rng b = Rng::for_stream(42, 7);
  Rng c = Rng::for_stream(42, 8);
  bool all_equal = true;
  bool any_diff_c = false;
  for (int i = 0; i < 64; ++i) {
    const double va = a.uniform();
    all_equal = all_equal && va == b.uniform();
    any_diff_c = any_diff_c || va != c.uniform();
  }
  CHECK(all_equal);
  CHECK(any_diff_c);
}

TEST_CASE("backward requires a fresh tape and a scalar root") {
  Tensor x = Tensor::from_vector(Shape{1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tape tape;
  Tensor loss;
  {
    Tape::Scope scope(tape);
    loss = ops::sum_all(x);
    CHECK_THROWS(tape.backward(ops::mul(x, x)));  // non-scalar root
  }
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);  // consumed
}

TEST_CASE("root = sum(x) gives unit gradients") {
  Tensor x = Tensor::from_vector(Shape{1, 1, 2, 2}, {1, 2, 3, 4}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor loss = ops::sum_all(x);
    tape.backward(loss);
  }
  REQUIRE(x.has_grad());
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("root = sum(x*x) doubles the input") {
  Tensor x = Tensor::from_vector(Shape{1, 1, 1, 2}, {1, 2}, true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(ops::sum_all(ops::mul(x, x)));
  }
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("no recording happens outside a tape scope") {
  Tensor x = Tensor::from_vector(Shape{1, 1, 1, 2}, {1, 2}, true);
  Tensor y = ops::mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("non-finite op results are rejected") {
  Engine::strict_finite_checks = true;
  Tensor big = Tensor::full(Shape{1, 1, 1, 4}, 1e308);
  CHECK_THROWS_AS(ops::add(big, big), NumericError);
}

TEST_CASE("f32 precision mode rounds through float") {
  Engine::precision = Precision::f32;
  Tensor a = Tensor::full(Shape{1, 1, 1, 1}, 1.0);
  Tensor b = Tensor::full(Shape{1, 1, 1, 1}, 1e-9);
  const double v = ops::add(a, b).item();
  Engine::precision = Precision::f64;
  CHECK(v == static_cast<double>(static_cast<float>(1.0 + 1e-9)));
  CHECK(v == static_cast<double>(static_cast<float>(v)));
}

TEST_CASE("same inputs give bit-identical outputs and gradients") {
  auto run = [] {
    Rng rng = Rng::for_stream(5, 1);
    Tensor x = Tensor::normal(Shape{2, 3, 4, 4}, 0.0, 1.0, rng, true);
    Tensor w = Tensor::normal(Shape{2, 3, 4, 4}, 0.0, 1.0, rng);
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = ops::sum_all(ops::mul(ops::sigmoid(x), w));
    const double v = loss.item();
    tape.backward(loss);
    return std::make_pair(v, x.grad());
  };
  const auto [v1, g1] = run();
  const auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_SUITE_END();
