#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "duat/loss.hpp"
#include "duat/metrics.hpp"
#include "duat/ops.hpp"

using namespace duat;

TEST_SUITE_BEGIN("loss_metrics");

TEST_CASE("pixel weights are one on constant masks") {
  LossConfig lc;
  Tensor zero_mask = Tensor::zeros(Shape{1, 1, 16, 16});
  Tensor w0 = pixel_weights(zero_mask, lc);
  for (std::int64_t i = 0; i < w0.numel(); ++i) CHECK(w0.data()[i] == 1.0);

  Tensor one_mask = Tensor::full(Shape{1, 1, 16, 16}, 1.0);
  Tensor w1 = pixel_weights(one_mask, lc);
  for (std::int64_t i = 0; i < w1.numel(); ++i) CHECK(w1.data()[i] == 1.0);

  Tensor bad = Tensor::full(Shape{1, 1, 4, 4}, 0.5);
  CHECK_THROWS_AS(pixel_weights(bad, lc), DataError);
}

TEST_CASE("single-pixel object center weight matches the window-count rule") {
  LossConfig lc;
  const int h = 33, w = 33;  // big enough that the window is unclipped
  Tensor mask = Tensor::zeros(Shape{1, 1, h, w});
  mask.mutable_data()[(h / 2) * w + w / 2] = 1.0;
  const int r = lc.radius_for(h);
  Tensor weights = pixel_weights(mask, lc);
  const double window = (2.0 * r + 1.0) * (2.0 * r + 1.0);
  const double expected = 1.0 + lc.weight_mu * (1.0 - 1.0 / window);
  CHECK(weights.at(0, 0, h / 2, w / 2) == doctest::Approx(expected).epsilon(1e-12));
  // Far corner is untouched by the window.
  CHECK(weights.at(0, 0, 0, 0) == 1.0);
  // Weights never drop below one.
  for (std::int64_t i = 0; i < weights.numel(); ++i) CHECK(weights.data()[i] >= 1.0);
}

TEST_CASE("radius scales with resolution and never drops below 2") {
  LossConfig lc;
  CHECK(lc.radius_for(352) == 15);
  CHECK(lc.radius_for(64) == 3);
  CHECK(lc.radius_for(32) == 2);
  CHECK(lc.radius_for(8) == 2);
}

TEST_CASE("perfectly confident predictions drive the loss to zero") {
  Rng rng(1);
  Tensor g = Tensor::zeros(Shape{1, 1, 8, 8});
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 4; ++j) g.mutable_data()[i * 8 + j] = 1.0;
  }
  Tensor s = Tensor::zeros(Shape{1, 1, 8, 8});
  for (std::int64_t i = 0; i < s.numel(); ++i) {
    s.mutable_data()[i] = g.data()[i] > 0.0 ? 200.0 : -200.0;
  }
  LossConfig lc;
  CHECK(structure_loss(s, g, lc).item() < 1e-6);

  // Loss is non-negative on random inputs.
  Tensor r = Tensor::normal(Shape{1, 1, 8, 8}, 0.0, 2.0, rng);
  CHECK(structure_loss(r, g, lc).item() >= 0.0);
}

TEST_CASE("unit weights reduce the weighted BCE to the plain mean") {
  Rng rng(2);
  Tensor s = Tensor::normal(Shape{2, 1, 6, 6}, 0.0, 1.5, rng);
  Tensor g = Tensor::zeros(Shape{2, 1, 6, 6});
  for (std::int64_t i = 0; i < g.numel(); ++i) {
    g.mutable_data()[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
  Tensor ones = Tensor::full(Shape{2, 1, 6, 6}, 1.0);
  const double weighted = weighted_bce_logits(s, g, ones).item();
  double plain = 0.0;
  for (std::int64_t i = 0; i < s.numel(); ++i) {
    const double x = s.data()[i];
    plain += std::max(x, 0.0) - x * g.data()[i] + std::log1p(std::exp(-std::abs(x)));
  }
  plain /= static_cast<double>(s.numel());
  CHECK(std::abs(weighted - plain) < 1e-12);
}

TEST_CASE("total loss doubles when the side outputs coincide") {
  Rng rng(3);
  Tensor s = Tensor::normal(Shape{1, 1, 8, 8}, 0.0, 1.0, rng);
  Tensor g = Tensor::zeros(Shape{1, 1, 8, 8});
  for (int i = 2; i < 6; ++i) {
    for (int j = 2; j < 6; ++j) g.mutable_data()[i * 8 + j] = 1.0;
  }
  LossConfig lc;
  Prediction pred{s, s};
  const double total = total_loss(pred, g, lc).item();
  const double single = structure_loss(s, g, lc).item();
  CHECK(total == doctest::Approx(2.0 * single).epsilon(1e-12));
  CHECK(total >= single);
}

TEST_CASE("loss decreases along the negative gradient") {
  Rng rng(4);
  Tensor s = Tensor::normal(Shape{1, 1, 8, 8}, 0.0, 1.0, rng, true);
  Tensor g = Tensor::zeros(Shape{1, 1, 8, 8});
  for (int i = 0; i < 24; ++i) g.mutable_data()[i] = 1.0;
  LossConfig lc;
  double before;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor loss = structure_loss(s, g, lc);
    before = loss.item();
    tape.backward(loss);
  }
  const auto& grad = s.grad();
  for (std::int64_t i = 0; i < s.numel(); ++i) s.mutable_data()[i] -= 0.05 * grad[i];
  CHECK(structure_loss(s, g, lc).item() < before);
}

TEST_CASE("metric closed forms: equality, disjoint, half overlap") {
  Tensor g = Tensor::zeros(Shape{1, 1, 2, 2});
  g.mutable_data()[0] = 1.0;
  g.mutable_data()[1] = 1.0;

  Tensor hard_probs = Tensor::zeros(Shape{1, 1, 2, 2});
  hard_probs.mutable_data()[0] = 1.0;
  hard_probs.mutable_data()[1] = 1.0;
  SampleMetrics eq = evaluate_sample("a", g, hard_probs, g);
  CHECK(eq.dice == 1.0);
  CHECK(eq.iou == 1.0);
  CHECK(eq.mae == 0.0);

  Tensor disjoint = Tensor::zeros(Shape{1, 1, 2, 2});
  disjoint.mutable_data()[2] = 1.0;
  disjoint.mutable_data()[3] = 1.0;
  SampleMetrics dj = evaluate_sample("b", disjoint, disjoint, g);
  CHECK(dj.dice == 0.0);
  CHECK(dj.iou == 0.0);

  // |P| = |G| = 2 with one pixel shared: dice 1/2, iou 1/3.
  Tensor half = Tensor::zeros(Shape{1, 1, 2, 2});
  half.mutable_data()[1] = 1.0;
  half.mutable_data()[2] = 1.0;
  SampleMetrics hf = evaluate_sample("c", half, half, g);
  CHECK(hf.dice == doctest::Approx(0.5));
  CHECK(hf.iou == doctest::Approx(1.0 / 3.0));

  // Both empty counts as perfect agreement.
  Tensor empty = Tensor::zeros(Shape{1, 1, 2, 2});
  SampleMetrics both = evaluate_sample("d", empty, empty, empty);
  CHECK(both.dice == 1.0);
  CHECK(both.iou == 1.0);
}

TEST_CASE("dice dominates iou on random masks") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor p = Tensor::zeros(Shape{1, 1, 4, 4});
    Tensor g = Tensor::zeros(Shape{1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) {
      p.mutable_data()[i] = rng.bernoulli(0.5);
      g.mutable_data()[i] = rng.bernoulli(0.5);
    }
    SampleMetrics m = evaluate_sample("r", p, p, g);
    CHECK(m.dice >= m.iou);
    if (m.dice == 0.0 || m.dice == 1.0) {
      CHECK(m.dice == m.iou);
    }
  }
}

TEST_CASE("metrics are invariant under a shared pixel permutation") {
  Rng rng(6);
  Tensor p = Tensor::zeros(Shape{1, 1, 3, 3});
  Tensor g = Tensor::zeros(Shape{1, 1, 3, 3});
  for (std::int64_t i = 0; i < 9; ++i) {
    p.mutable_data()[i] = rng.bernoulli(0.5);
    g.mutable_data()[i] = rng.bernoulli(0.5);
  }
  SampleMetrics base = evaluate_sample("x", p, p, g);
  // Rotate both masks by the same permutation.
  Tensor p2 = Tensor::zeros(Shape{1, 1, 3, 3});
  Tensor g2 = Tensor::zeros(Shape{1, 1, 3, 3});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      p2.mutable_data()[j * 3 + (2 - i)] = p.data()[i * 3 + j];
      g2.mutable_data()[j * 3 + (2 - i)] = g.data()[i * 3 + j];
    }
  }
  SampleMetrics rotated = evaluate_sample("x", p2, p2, g2);
  CHECK(base.dice == rotated.dice);
  CHECK(base.iou == rotated.iou);
  CHECK(base.mae == rotated.mae);
}

TEST_CASE("size-stratified bins: populations, placement, means") {
  std::vector<SampleMetrics> samples;
  auto add = [&](double dice, double frac) {
    SampleMetrics m;
    m.id = "s" + std::to_string(samples.size());
    m.dice = dice;
    m.iou = dice / 2;
    m.mae = 0.01;
    m.area_fraction = frac;
    samples.push_back(m);
  };
  add(0.8, 0.04);  // <5% bin
  add(0.6, 0.02);  // <5% bin
  add(1.0, 0.30);
  EvalReport report = build_report(samples, EvalReport::default_bin_edges());
  REQUIRE(report.bins.size() == 2);  // empty bins are absent, not zero
  CHECK(report.bins[0].lo == 0.0);
  CHECK(report.bins[0].count == 2);
  CHECK(report.bins[0].mean_dice == doctest::Approx(0.7));
  CHECK(report.bins[1].count == 1);
  CHECK(report.bins[1].mean_dice == doctest::Approx(1.0));
  int total = 0;
  for (const auto& b : report.bins) total += b.count;
  CHECK(total == 3);

  // All samples in one bin: the bin mean equals the global mean.
  std::vector<SampleMetrics> one_bin(samples.begin(), samples.begin() + 2);
  EvalReport rb = build_report(one_bin, EvalReport::default_bin_edges());
  REQUIRE(rb.bins.size() == 1);
  CHECK(rb.bins[0].mean_dice == doctest::Approx(rb.mean_dice));

  SampleMetrics bad;
  bad.area_fraction = 1.5;
  CHECK_THROWS_AS(build_report({bad}, EvalReport::default_bin_edges()), DataError);
}

TEST_CASE("report files are stable line-delimited text") {
  namespace fs = std::filesystem;
  std::vector<SampleMetrics> samples;
  SampleMetrics m;
  m.id = "s0";
  m.dice = 0.875;
  m.iou = 0.777;
  m.mae = 0.012;
  m.area_fraction = 0.043;
  samples.push_back(m);
  EvalReport report = build_report(samples, EvalReport::default_bin_edges());
  const std::string rp = (fs::temp_directory_path() / "duat_report.txt").string();
  const std::string cp = (fs::temp_directory_path() / "duat_curve.dat").string();
  write_report(report, rp, cp);
  write_report(report, rp, cp);  // idempotent
  std::ifstream is(rp);
  std::string line;
  std::getline(is, line);
  CHECK(line == "sample id=s0 dice=0.875000 iou=0.777000 mae=0.012000 area_fraction=0.043000");
  std::getline(is, line);
  CHECK(line.rfind("bin lo=0.00", 0) == 0);
  std::getline(is, line);
  CHECK(line == "aggregate n=1 mdice=0.875000 miou=0.777000 mae=0.012000");
  fs::remove(rp);
  fs::remove(cp);
}

TEST_SUITE_END();
