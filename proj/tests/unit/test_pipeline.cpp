#include <doctest.h>

#include <random>

#include "error.hpp"
#include "io_util.hpp"
#include "pipeline.hpp"
#include "ply.hpp"
#include "test_util.hpp"

using namespace vfpp;
namespace fs = std::filesystem;

namespace {

void write_sphere_cloud(const fs::path& p, double radius) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0, 1);
  PointCloud pc;
  for (int i = 0; i < 3000; ++i) pc.points.push_back(Vec3(0, 0, 500) + radius * Vec3(g(rng), g(rng), g(rng)).normalized());
  write_ply(p, pc);
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("stage lists") {
    const auto all = parse_stages("all");
    REQUIRE(all.size() == 7);
    CHECK(all.front() == Stage::Patterns);
    CHECK(all.back() == Stage::Twin);
    const auto some = parse_stages("twin,patterns");
    REQUIRE(some.size() == 2);
    CHECK(some[0] == Stage::Patterns);
    CHECK(std::string(stage_name(some[1])) == "twin");
    CHECK_THROWS_AS(parse_stages("patterns,bogus"), Error);
    CHECK_THROWS_AS(parse_stages(""), Error);
  }

  TEST_CASE("config parsing is strict and round trips") {
    const auto j = nlohmann::json::parse(R"({
      "scene": "scene.json", "output_dir": "out", "seed": 7,
      "patterns": {"period_px": 38, "n_steps": 12, "format": "pgm"},
      "poses": {"count": 6},
      "validation": {"sphere_radius_mm": 40, "msac_threshold_mm": 0.5},
      "twin": {"z_mm": [400, 500]}
    })");
    const auto c = pipeline_config_from_json(j, "/cfg");
    CHECK(c.seed == 7);
    CHECK(c.fringe.n_steps == 12);
    CHECK(c.image_format == ImageFormat::Pgm);
    CHECK(c.poses.count == 6);
    CHECK(c.sphere_radius_mm == 40);
    CHECK(c.twin_z_mm == std::vector<double>{400, 500});
    const auto c2 = pipeline_config_from_json(c.to_json(), "/cfg");
    CHECK(c2.to_json() == c.to_json());
    for (const char* bad : {R"({"bogus": 1})", R"({"patterns": {"period": 38}})", R"({"patterns": {"format": "tif"}})",
                            R"({"seed": "x"})", R"({"poses": {"count": 0}})"}) {
      try {
        pipeline_config_from_json(nlohmann::json::parse(bad));
        FAIL("expected ConfigError for " << bad);
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ConfigError);
      }
    }
  }

  TEST_CASE("missing scene is a config error with no artifacts") {
    const auto dir = testutil::temp_dir("pipe_missing");
    PipelineConfig cfg;
    cfg.base_dir = dir;
    cfg.scene = "nope.json";
    cfg.output_dir = "out";
    const auto o = run_pipeline(cfg, parse_stages("capture"));
    CHECK(o.exit_code == 2);
    CHECK_FALSE(fs::exists(dir / "out"));
  }

  TEST_CASE("missing upstream artifact is a stage failure without partial output") {
    const auto dir = testutil::temp_dir("pipe_upstream");
    PipelineConfig cfg;
    cfg.base_dir = dir;
    cfg.output_dir = "out";
    const auto o = run_pipeline(cfg, parse_stages("reconstruct"));
    CHECK(o.exit_code == 3);
    CHECK(o.failed_stage == "reconstruct");
    CHECK_FALSE(fs::exists(dir / "out" / "reconstruct"));
    CHECK_FALSE(fs::exists(dir / "out" / ".reconstruct.partial"));
  }

  TEST_CASE("validate stage passes and misses thresholds") {
    const auto dir = testutil::temp_dir("pipe_validate");
    PipelineConfig cfg;
    cfg.base_dir = dir;
    cfg.output_dir = "out";
    write_sphere_cloud(dir / "out" / "reconstruct" / "cloud.ply", 50.0);
    auto o = run_pipeline(cfg, parse_stages("validate"));
    CHECK(o.exit_code == 0);
    auto rep = read_json_file(dir / "out" / "validate" / "sphere_fit.json");
    CHECK(rep["radius_mm"].get<double>() == doctest::Approx(50).epsilon(1e-9));
    const auto man = read_json_file(dir / "out" / "validate" / "run_manifest.json");
    CHECK(man["status"] == "ok");
    CHECK(man["inputs"].size() == 1);
    CHECK(o.stages.size() == 1);
    CHECK_FALSE(o.stages[0].warnings.empty());  // no reference geometry

    write_sphere_cloud(dir / "out" / "reconstruct" / "cloud.ply", 52.0);
    o = run_pipeline(cfg, parse_stages("validate"));
    CHECK(o.exit_code == 4);
    rep = read_json_file(dir / "out" / "validate" / "sphere_fit.json");
    CHECK(rep["radial_error_mm"].get<double>() == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(read_json_file(dir / "out" / "validate" / "run_manifest.json")["status"] == "threshold_exceeded");
  }

  TEST_CASE("patterns and board stages are reproducible") {
    const auto dir = testutil::temp_dir("pipe_patterns");
    PipelineConfig cfg;
    cfg.base_dir = dir;
    cfg.output_dir = "out";
    cfg.board.px_per_mm = 2;
    REQUIRE(run_pipeline(cfg, parse_stages("patterns,board")).exit_code == 0);
    const auto meta = read_json_file(dir / "out" / "patterns" / "patterns.json");
    CHECK(fs::exists(dir / "out" / "patterns" / "fringe_vertical_38px_01.png"));
    CHECK(fs::exists(dir / "out" / "board" / "board.png"));
    const auto h1 = hash_file(dir / "out" / "board" / "board.json");
    const auto h2 = hash_file(dir / "out" / "patterns" / "gray_horizontal_comp.png");
    REQUIRE(run_pipeline(cfg, parse_stages("patterns,board")).exit_code == 0);
    CHECK(hash_file(dir / "out" / "board" / "board.json") == h1);
    CHECK(hash_file(dir / "out" / "patterns" / "gray_horizontal_comp.png") == h2);
    CHECK(meta.is_object());
  }

  TEST_CASE("twin stage from an external calibration") {
    const auto dir = testutil::temp_dir("pipe_twin");
    PipelineConfig cfg;
    cfg.base_dir = dir;
    cfg.output_dir = "out";
    cfg.twin_calibration = fs::path(VFPP_SOURCE_DIR) / "data" / "real_system_calib.json";
    cfg.twin_z_mm = {400};
    REQUIRE(run_pipeline(cfg, parse_stages("twin")).exit_code == 0);
    const auto e = read_json_file(dir / "out" / "twin" / "extent.json");
    const auto row = e["rows"][0];
    CHECK(std::abs(row["width_extent_mm"].get<double>() - 202.7) <= 0.5);
    CHECK(std::abs(row["height_extent_mm"].get<double>() - 323.3) <= 0.5);
    CHECK(fs::exists(dir / "out" / "twin" / "sweep.csv"));
    cfg.twin_calibration = dir / "none.json";
    CHECK(run_pipeline(cfg, parse_stages("twin")).exit_code == 2);
  }
}
