#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "image.hpp"
#include "patterns.hpp"
#include "render.hpp"

namespace vfpp {

enum class Stage { Patterns, Board, Capture, Calibrate, Reconstruct, Validate, Twin };

const char* stage_name(Stage s);
/// "all" or a comma list of stage names; returned in canonical order.
std::vector<Stage> parse_stages(const std::string& list);

struct PipelineConfig {
  /// Relative paths resolve against this directory (the config file's).
  std::filesystem::path base_dir;
  std::filesystem::path scene;
  nlohmann::json scene_inline;  // used when `scene` is empty
  std::filesystem::path output_dir = "fpp_out";
  std::uint64_t seed = 0;

  FringeSetSpec fringe;
  bool complementary = true;
  CalibBoardSpec board;
  PoseProtocol poses;
  ImageFormat image_format = ImageFormat::Png;

  double max_stereo_rms_px = 0.5;
  double max_proj_rms_px = 0.5;
  /// Modulation mask threshold as a fraction of the 16-bit full scale.
  double modulation_threshold = 0.02;
  double recon_scale = 1.0;

  double sphere_radius_mm = 50.0;
  double msac_threshold_mm = 1.0;
  int msac_max_trials = 2000;
  double max_radial_error_mm = 1.0;
  double max_relative_error = 0.02;
  double min_inlier_fraction = 0.99;
  /// Optional PLY mesh for the C2M report; a scene sphere is tessellated otherwise.
  std::filesystem::path reference_mesh;
  int histogram_bins = 20;

  /// Calibration used by the twin stage; the calibrate stage output when empty.
  std::filesystem::path twin_calibration;
  std::vector<double> twin_z_mm{400, 600, 800, 1000};
  /// Adds the simulator camera block when positive.
  double twin_pixel_size_mm = 0;

  /// Canonical form; its hash identifies a run.
  nlohmann::json to_json() const;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& p);

struct StageResult {
  Stage stage = Stage::Patterns;
  double seconds = 0;
  std::vector<std::string> artifacts;  // relative to the output directory
  std::vector<std::string> warnings;
};

struct PipelineOutcome {
  /// 0 success, 2 config error, 3 stage failure, 4 acceptance threshold.
  int exit_code = 0;
  std::vector<StageResult> stages;
  std::string failed_stage;
  std::string message;
};

using PipelineLog = std::function<void(const std::string&)>;

/// Runs the requested stages in canonical order. Each stage writes into a
/// scratch directory that replaces out/<stage> only on success, so a failing
/// stage leaves no partial artifacts. Stops at the first failure.
PipelineOutcome run_pipeline(const PipelineConfig& config, const std::vector<Stage>& stages,
                             const PipelineLog& log = {});

/// Measurement scene of a config (file or inline).
Scene pipeline_scene(const PipelineConfig& config);

}  // namespace vfpp
