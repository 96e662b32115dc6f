#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "duat/config.hpp"
#include "duat/pipeline.hpp"

using namespace duat;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("config");

TEST_CASE("defaults cover every known key") {
  Config cfg;
  CHECK(cfg.get_int("seed") == 1);
  CHECK(cfg.get_double("optim.lr") == 1e-4);
  CHECK(cfg.get_double("optim.weight_decay") == 1e-4);
  CHECK(cfg.get_int("train.batch") == 4);
  CHECK(cfg.get_int("train.steps") == 2000);
  CHECK(cfg.get_int("model.input_size") == 64);
  CHECK(cfg.get_bool("model.use_sba"));
  CHECK(cfg.get_int_list("encoder.dims") == std::vector<int>{32, 64, 96, 128});
}

TEST_CASE("unknown keys are rejected everywhere") {
  Config cfg;
  CHECK_THROWS_AS(cfg.set("model.depth", "3"), DataError);
  CHECK_THROWS_AS(cfg.get("nonexistent.key"), DataError);
  CHECK_THROWS_AS(cfg.set("notakey"), DataError);  // no '=' in the override
}

TEST_CASE("file parsing handles comments, blanks, and bad lines") {
  const std::string path = (fs::temp_directory_path() / "duat_cfg_test.cfg").string();
  {
    std::ofstream os(path);
    os << "# a comment\n";
    os << "\n";
    os << "seed = 9\n";
    os << "optim.lr = 0.001  # inline comment\n";
    os << "model.arrangement = serial_gsa_lsa\n";
  }
  Config cfg = Config::from_file(path);
  CHECK(cfg.get_int("seed") == 9);
  CHECK(cfg.get_double("optim.lr") == 0.001);
  CHECK(cfg.get("model.arrangement") == "serial_gsa_lsa");

  {
    std::ofstream os(path);
    os << "seed 9\n";
  }
  CHECK_THROWS_AS(Config::from_file(path), DataError);
  CHECK_THROWS_AS(Config::from_file("/nonexistent/duat.cfg"), DataError);
  fs::remove(path);
}

TEST_CASE("typed getters reject malformed values") {
  Config cfg;
  cfg.set("train.steps", "12x");
  CHECK_THROWS_AS(cfg.get_int("train.steps"), DataError);
  cfg.set("optim.lr", "fast");
  CHECK_THROWS_AS(cfg.get_double("optim.lr"), DataError);
  cfg.set("model.use_sba", "maybe");
  CHECK_THROWS_AS(cfg.get_bool("model.use_sba"), DataError);
  cfg.set("encoder.dims", "32,abc");
  CHECK_THROWS_AS(cfg.get_int_list("encoder.dims"), DataError);
}

TEST_CASE("echo round-trips through the parser") {
  Config cfg;
  cfg.set("seed", "123");
  cfg.set("model.arrangement", "lsa_only");
  const std::string path = (fs::temp_directory_path() / "duat_cfg_echo.cfg").string();
  cfg.write(path);
  Config back = Config::from_file(path);
  CHECK(back.echo() == cfg.echo());
  fs::remove(path);
}

TEST_CASE("model and loss builders consume the config") {
  Config cfg;
  cfg.set("encoder.depths", "1,1,1,1");
  cfg.set("encoder.dims", "8,16,24,32");
  cfg.set("model.arrangement", "lsa_only");
  cfg.set("model.use_sba", "false");
  DuatConfig mc = model_config_from(cfg);
  CHECK(mc.encoder.dims[2] == 24);
  CHECK(mc.arrangement == GlsaArrangement::lsa_only);
  CHECK_FALSE(mc.use_sba);

  cfg.set("loss.lambda_iou", "0");
  cfg.set("loss.lambda_bce", "0");
  CHECK_THROWS_AS(loss_config_from(cfg), DataError);
}

TEST_CASE("ablation variant wiring") {
  Config base;
  CHECK(variant_display_name("full") == "SBA + GLSA (Ours)");
  CHECK(variant_display_name("wo_glsa") == "w/o GLSA");
  CHECK_THROWS_AS(variant_display_name("bogus"), DataError);

  Config v = apply_variant(base, "serial_lsa_gsa");
  CHECK(v.get("model.arrangement") == "serial_lsa_gsa");
  CHECK(v.get("model.use_sba") == "false");
  Config w = apply_variant(base, "wo_glsa");
  CHECK(w.get("model.use_glsa") == "false");
  CHECK(w.get("model.use_sba") == "true");
}

TEST_SUITE_END();
