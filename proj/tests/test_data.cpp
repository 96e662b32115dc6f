#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "duat/data.hpp"

using namespace duat;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("data");

TEST_CASE("generated samples honor the fraction range exactly") {
  data::GenSpec spec;
  spec.fraction_min = 0.01;
  spec.fraction_max = 0.05;
  spec.seed = 3;
  auto samples = data::generate(spec, 20);
  REQUIRE(samples.size() == 20);
  for (const auto& s : samples) {
    CHECK(s.area_fraction >= spec.fraction_min);
    CHECK(s.area_fraction <= spec.fraction_max);
    // area_fraction is exactly foreground count / (h*w)
    std::int64_t fg = 0;
    for (std::int64_t i = 0; i < s.mask.numel(); ++i) fg += s.mask.data()[i] != 0.0;
    CHECK(s.area_fraction == static_cast<double>(fg) / (spec.height * spec.width));
    CHECK(fg > 0);
  }
}

TEST_CASE("generation is byte-deterministic per (spec, seed)") {
  data::GenSpec spec;
  spec.seed = 11;
  auto a = data::generate(spec, 4);
  auto b = data::generate(spec, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].image.values() == b[i].image.values());
    CHECK(a[i].mask.values() == b[i].mask.values());
    CHECK(a[i].id == b[i].id);
  }
  spec.seed = 12;
  auto c = data::generate(spec, 4);
  CHECK(a[0].image.values() != c[0].image.values());
}

TEST_CASE("an unsatisfiable fraction range is rejected") {
  data::GenSpec spec;
  spec.height = spec.width = 16;  // 256 pixels
  spec.fraction_min = 0.00001;
  spec.fraction_max = 0.00002;  // below a single pixel
  CHECK_THROWS_AS(data::generate(spec, 1), DataError);
}

TEST_CASE("zero contrast removes the foreground/background mean gap") {
  data::GenSpec spec;
  spec.contrast = 0.0;
  spec.noise = 0.05;
  spec.blur_sigma = 0.0;
  spec.fraction_min = 0.2;
  spec.fraction_max = 0.4;
  spec.seed = 7;
  auto samples = data::generate(spec, 6);
  for (const auto& s : samples) {
    double fg = 0.0, bg = 0.0;
    std::int64_t nfg = 0, nbg = 0;
    const std::int64_t hw = static_cast<std::int64_t>(spec.height) * spec.width;
    for (std::int64_t i = 0; i < hw; ++i) {
      if (s.mask.data()[i] != 0.0) {
        fg += s.image.data()[i];
        ++nfg;
      } else {
        bg += s.image.data()[i];
        ++nbg;
      }
    }
    const double gap = std::abs(fg / nfg - bg / nbg);
    // Noise floor: sigma / sqrt(n) per region mean, double it for headroom.
    const double floor = 2.0 * spec.noise * (1.0 / std::sqrt(static_cast<double>(nfg)) +
                                             1.0 / std::sqrt(static_cast<double>(nbg)));
    CHECK(gap < floor);
  }
}

TEST_CASE("positive contrast separates the regions") {
  data::GenSpec spec;
  spec.contrast = 0.4;
  spec.seed = 8;
  auto samples = data::generate(spec, 3);
  for (const auto& s : samples) {
    double fg = 0.0, bg = 0.0;
    std::int64_t nfg = 0, nbg = 0;
    const std::int64_t hw = static_cast<std::int64_t>(spec.height) * spec.width;
    for (std::int64_t i = 0; i < hw; ++i) {
      if (s.mask.data()[i] != 0.0) {
        fg += s.image.data()[i];
        ++nfg;
      } else {
        bg += s.image.data()[i];
        ++nbg;
      }
    }
    CHECK(fg / nfg - bg / nbg > 0.1);
  }
}

TEST_CASE("netpbm round trip reproduces files byte for byte") {
  data::GenSpec spec;
  spec.seed = 21;
  auto samples = data::generate(spec, 1);
  const auto dir = fs::temp_directory_path() / "duat_pnm_test";
  fs::create_directories(dir);
  const std::string img1 = (dir / "a.ppm").string();
  const std::string img2 = (dir / "b.ppm").string();
  data::write_ppm(img1, samples[0].image);
  Tensor back = data::read_ppm(img1);
  CHECK(back.values() == samples[0].image.values());
  data::write_ppm(img2, back);
  std::ifstream f1(img1, std::ios::binary), f2(img2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  const std::string msk = (dir / "m.pgm").string();
  data::write_pgm(msk, samples[0].mask);
  CHECK(data::read_pgm(msk).values() == samples[0].mask.values());
  fs::remove_all(dir);
}

TEST_CASE("all-255 P5 mask reads as all ones") {
  const auto dir = fs::temp_directory_path() / "duat_pnm_ones";
  fs::create_directories(dir);
  const std::string path = (dir / "ones.pgm").string();
  data::write_pgm(path, Tensor::full(Shape{1, 1, 4, 4}, 1.0));
  Tensor m = data::read_pgm(path);
  for (std::int64_t i = 0; i < m.numel(); ++i) CHECK(m.data()[i] == 1.0);
  fs::remove_all(dir);
}

TEST_CASE("headers with comment lines parse correctly") {
  const auto dir = fs::temp_directory_path() / "duat_pnm_comment";
  fs::create_directories(dir);
  const std::string path = (dir / "c.pgm").string();
  {
    std::ofstream os(path, std::ios::binary);
    os << "P5\n# produced by hand\n2 2\n# maxval next\n255\n";
    const unsigned char raster[4] = {255, 0, 255, 0};
    os.write(reinterpret_cast<const char*>(raster), 4);
  }
  Tensor m = data::read_pgm(path);
  CHECK(m.at(0, 0, 0, 0) == 1.0);
  CHECK(m.at(0, 0, 0, 1) == 0.0);
  CHECK(m.at(0, 0, 1, 0) == 1.0);

  // Truncated raster is an error.
  {
    std::ofstream os(path, std::ios::binary);
    os << "P5\n4 4\n255\n";
    os << "xy";
  }
  CHECK_THROWS_AS(data::read_pgm(path), DataError);
  fs::remove_all(dir);
}

TEST_CASE("flip is an involution and shared transforms keep overlap") {
  data::GenSpec spec;
  spec.seed = 31;
  auto samples = data::generate(spec, 2);
  const data::Sample& s = samples[0];
  Tensor once = data::flip_horizontal(s.image);
  Tensor twice = data::flip_horizontal(once);
  CHECK(twice.values() == s.image.values());

  Rng rng(5);
  data::Sample aug = data::augment(s, rng);
  CHECK(aug.area_fraction == s.area_fraction);
  std::int64_t fg = 0;
  for (std::int64_t i = 0; i < aug.mask.numel(); ++i) fg += aug.mask.data()[i] != 0.0;
  CHECK(static_cast<double>(fg) / aug.mask.numel() == s.area_fraction);
}

TEST_CASE("rotation preserves area fraction exactly for all four turns") {
  data::GenSpec spec;
  spec.seed = 33;
  auto samples = data::generate(spec, 1);
  for (int q = 0; q < 4; ++q) {
    Tensor r = data::rotate90(samples[0].mask, q);
    std::int64_t fg = 0;
    for (std::int64_t i = 0; i < r.numel(); ++i) fg += r.data()[i] != 0.0;
    CHECK(static_cast<double>(fg) / r.numel() == samples[0].area_fraction);
  }
  // Four quarter turns come back to the start.
  Tensor once = data::rotate90(samples[0].image, 1);
  Tensor full_turn = data::rotate90(data::rotate90(data::rotate90(once, 1), 1), 1);
  CHECK(full_turn.values() == samples[0].image.values());
}

TEST_CASE("image and mask receive the same transform") {
  data::GenSpec spec;
  spec.seed = 35;
  spec.contrast = 0.9;
  spec.noise = 0.0;
  spec.blur_sigma = 0.0;
  auto samples = data::generate(spec, 1);
  Rng rng(9);
  data::Sample aug = data::augment(samples[0], rng);
  // With hard contrast and no noise or blur, foreground pixels stay strictly
  // brighter than background; that only holds if image and mask moved
  // together.
  const std::int64_t hw = aug.mask.numel();
  const double* img = aug.image.data();  // channel 0
  double bg_max = 0.0, fg_min = 1.0;
  for (std::int64_t i = 0; i < hw; ++i) {
    if (aug.mask.data()[i] == 0.0) {
      bg_max = std::max(bg_max, img[i]);
    } else {
      fg_min = std::min(fg_min, img[i]);
    }
  }
  CHECK(fg_min > bg_max);
}

TEST_CASE("split is a deterministic disjoint partition with exact sizes") {
  data::GenSpec spec;
  spec.height = spec.width = 16;
  spec.fraction_min = 0.05;
  spec.fraction_max = 0.3;
  spec.seed = 41;
  auto samples = data::generate(spec, 100);
  auto sp = data::split(samples, 0.8, 0.1, 0.1, 7);
  CHECK(sp.train.size() == 80);
  CHECK(sp.val.size() == 10);
  CHECK(sp.test.size() == 10);

  std::set<std::string> ids;
  for (const auto& s : sp.train) ids.insert(s.id);
  for (const auto& s : sp.val) ids.insert(s.id);
  for (const auto& s : sp.test) ids.insert(s.id);
  CHECK(ids.size() == 100);

  auto sp2 = data::split(data::generate(spec, 100), 0.8, 0.1, 0.1, 7);
  for (std::size_t i = 0; i < sp.train.size(); ++i) CHECK(sp.train[i].id == sp2.train[i].id);

  CHECK_THROWS_AS(data::split(data::generate(spec, 10), 0.5, 0.2, 0.2, 1), DataError);
}

TEST_CASE("manifest round trip preserves entries") {
  data::GenSpec spec;
  spec.seed = 51;
  auto samples = data::generate(spec, 3);
  const auto dir = fs::temp_directory_path() / "duat_manifest_test";
  data::write_dataset(samples, dir.string(), "manifest.tsv");
  auto entries = data::read_manifest((dir / "manifest.tsv").string());
  REQUIRE(entries.size() == 3);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    CHECK(entries[i].id == samples[i].id);
    CHECK(entries[i].area_fraction == doctest::Approx(samples[i].area_fraction).epsilon(1e-9));
    data::Sample loaded = data::load_sample(entries[i]);
    CHECK(loaded.image.values() == samples[i].image.values());
    CHECK(loaded.mask.values() == samples[i].mask.values());
  }
  fs::remove_all(dir);
}

TEST_SUITE_END();
