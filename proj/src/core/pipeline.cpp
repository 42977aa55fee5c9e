#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <map>
#include <optional>
#include <set>

#include "calib.hpp"
#include "error.hpp"
#include "io_util.hpp"
#include "metrology.hpp"
#include "parallel.hpp"
#include "ply.hpp"
#include "recon.hpp"
#include "session.hpp"
#include "twin.hpp"
#include "version.hpp"

namespace vfpp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr Stage kAllStages[] = {Stage::Patterns,    Stage::Board,    Stage::Capture, Stage::Calibrate,
                                Stage::Reconstruct, Stage::Validate, Stage::Twin};

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw Error(ErrorCode::ConfigError, "unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json vec2_list(const std::vector<Vec2>& v) {
  json a = json::array();
  for (const auto& p : v) a.push_back({p.x(), p.y()});
  return a;
}

/// Thrown by a stage whose artifacts are valid but miss an acceptance bound.
struct ThresholdMiss {
  std::string message;
};

struct StageContext {
  const PipelineConfig& cfg;
  fs::path out;
  std::string config_hash;
};

const char* image_ext(ImageFormat f) { return f == ImageFormat::Png ? ".png" : ".pgm"; }

/// Frames of one capture session grouped by pose, loaded on demand.
class CaptureFrames {
 public:
  explicit CaptureFrames(const fs::path& session) : dir_(session) {
    const fs::path manifest = session / "manifest.jsonl";
    if (!fs::exists(manifest)) throw Error(ErrorCode::IoError, "missing capture manifest " + manifest.string());
    for (auto& r : read_capture_manifest(manifest)) by_pose_[r.pose][r.pattern] = r.file;
  }

  std::vector<int> poses() const {
    std::vector<int> p;
    for (const auto& kv : by_pose_) p.push_back(kv.first);
    return p;
  }

  FrameLookup lookup(int pose) {
    cache_.clear();
    return [this, pose](const std::string& id) -> const GrayImage16& {
      auto c = cache_.find(id);
      if (c != cache_.end()) return c->second;
      const auto& files = by_pose_.at(pose);
      auto f = files.find(id);
      if (f == files.end())
        throw Error(ErrorCode::IoError, "pattern '" + id + "' missing from " + (dir_ / "manifest.jsonl").string());
      return cache_.emplace(id, read_image(dir_ / f->second)).first->second;
    };
  }

 private:
  fs::path dir_;
  std::map<int, std::map<std::string, std::string>> by_pose_;
  std::map<std::string, GrayImage16> cache_;
};

fs::path require_input(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(ErrorCode::IoError, what + " not found: " + p.string() + " (run the producing stage first)");
  return p;
}

std::vector<PatternEntry> config_patterns(const PipelineConfig& cfg) {
  return standard_pattern_set(cfg.fringe, cfg.complementary);
}

double mod_threshold_counts(const PipelineConfig& cfg) { return cfg.modulation_threshold * 65535.0; }

void stage_patterns(const StageContext& ctx, const fs::path& dir, StageResult&, std::vector<fs::path>&) {
  json index = json::array();
  for (const auto& p : config_patterns(ctx.cfg)) {
    const std::string file = p.id + image_ext(ctx.cfg.image_format);
    write_image(dir / file, p.image);
    index.push_back({{"id", p.id}, {"file", file}, {"hash", hex64(image_hash(p.image))}});
  }
  write_json_file(dir / "patterns.json", {{"period_px", ctx.cfg.fringe.period_px},
                                          {"n_steps", ctx.cfg.fringe.n_steps},
                                          {"resolution", {ctx.cfg.fringe.proj_width, ctx.cfg.fringe.proj_height}},
                                          {"patterns", index}});
}

json board_spec_json(const CalibBoardSpec& b) {
  return {{"rows", b.rows},
          {"cols", b.cols},
          {"circle_diameter_mm", b.d_circle_mm},
          {"center_spacing_mm", b.d_centers_mm},
          {"border_mm", b.border_mm},
          {"plane_width_m", b.plane_w_m},
          {"plane_height_m", b.plane_h_m},
          {"pixels_per_mm", b.px_per_mm},
          {"circle_level", b.circle_level}};
}

void stage_board(const StageContext& ctx, const fs::path& dir, StageResult&, std::vector<fs::path>&) {
  const CalibBoard board = gen_calibration_board(ctx.cfg.board);
  write_image(dir / (std::string("board") + image_ext(ctx.cfg.image_format)), board.texture);
  const auto& r = board.report;
  json pts = json::array();
  for (const auto& p : board_object_points(ctx.cfg.board)) pts.push_back({p.x(), p.y(), p.z()});
  write_json_file(dir / "board.json", {{"spec", board_spec_json(ctx.cfg.board)},
                                       {"report",
                                        {{"w_pattern_m", r.w_pattern_m},
                                         {"h_pattern_m", r.h_pattern_m},
                                         {"scale", r.scale},
                                         {"d_circle_sim_m", r.d_circle_sim_m},
                                         {"d_centers_sim_m", r.d_centers_sim_m},
                                         {"texture_width", r.texture_width},
                                         {"texture_height", r.texture_height}}},
                                       {"object_points_mm", pts}});
}

void stage_capture(const StageContext& ctx, const fs::path& dir, StageResult& res, std::vector<fs::path>& inputs) {
  const auto& cfg = ctx.cfg;
  if (!cfg.scene.empty()) inputs.push_back(resolve_path(cfg.base_dir, cfg.scene));
  const Scene scene = pipeline_scene(cfg);
  const auto patterns = config_patterns(cfg);

  Scene rig = scene;
  rig.objects.clear();
  PoseProtocol protocol = cfg.poses;
  protocol.seed = cfg.seed;
  const CalibBoard board = gen_calibration_board(cfg.board);
  BoardPlacement placement;
  placement.poses = generate_board_poses(protocol, cfg.board);
  rig.objects.push_back(make_board_object(cfg.board, board, placement.poses.front()));
  placement.object = 0;
  placement.report = board.report;
  placement.spec = cfg.board;
  run_capture_session(rig, patterns, &placement, dir / "calib", cfg.image_format, &res.warnings);

  json poses = json::array();
  for (const auto& p : placement.poses) poses.push_back(pose_to_json(p));
  write_json_file(dir / "board_poses.json", {{"seed", cfg.seed}, {"board_to_world", poses}});

  run_capture_session(scene, patterns, nullptr, dir / "measure", cfg.image_format, &res.warnings);
}

void stage_calibrate(const StageContext& ctx, const fs::path& dir, StageResult& res, std::vector<fs::path>& inputs) {
  const auto& cfg = ctx.cfg;
  const fs::path session = ctx.out / "capture" / "calib";
  inputs.push_back(require_input(session / "manifest.jsonl", "calibration capture"));
  const Scene scene = pipeline_scene(cfg);
  CaptureFrames frames(session);

  PoseObservations cam, proj;
  std::vector<int> pose_ids;
  json corr = json::array();
  for (int pose : frames.poses()) {
    try {
      const auto pc = extract_pose_correspondences(frames.lookup(pose), cfg.fringe, cfg.complementary, cfg.board,
                                                   mod_threshold_counts(cfg), pose);
      cam.push_back(pc.grid.centers);
      proj.push_back(pc.projector);
      pose_ids.push_back(pose);
      corr.push_back({{"pose", pose}, {"camera_px", vec2_list(pc.grid.centers)}, {"projector_px", vec2_list(pc.projector)}});
    } catch (const Error& e) {
      switch (e.code()) {
        case ErrorCode::GridNotFound:
        case ErrorCode::AmbiguousOrientation:
        case ErrorCode::CenterMasked:
          res.warnings.push_back("pose " + std::to_string(pose) + " skipped: " + e.what());
          break;
        default:
          throw;
      }
    }
  }
  Intrinsics proj_size;
  proj_size.width = cfg.fringe.proj_width;
  proj_size.height = cfg.fringe.proj_height;
  CalibrationResult calib =
      stereo_calibrate(cam, proj, board_object_points(cfg.board), scene.camera.intrinsics, proj_size);
  for (auto& a : calib.accepted_poses) a = pose_ids[a];
  for (int p : pose_ids)
    if (std::find(calib.accepted_poses.begin(), calib.accepted_poses.end(), p) == calib.accepted_poses.end())
      res.warnings.push_back("pose " + std::to_string(p) + " rejected as a reprojection outlier");

  save_calibration(dir / "calibration.json", calib);
  write_json_file(dir / "correspondences.json", {{"poses", corr}});

  if (calib.stereo_reproj_rms > cfg.max_stereo_rms_px || calib.proj_reproj_rms > cfg.max_proj_rms_px) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "reprojection RMS %.4f / %.4f px exceeds %.4f / %.4f px", calib.stereo_reproj_rms,
                  calib.proj_reproj_rms, cfg.max_stereo_rms_px, cfg.max_proj_rms_px);
    throw ThresholdMiss{buf};
  }
}

void stage_reconstruct(const StageContext& ctx, const fs::path& dir, StageResult&, std::vector<fs::path>& inputs) {
  const auto& cfg = ctx.cfg;
  const fs::path calib_path = require_input(ctx.out / "calibrate" / "calibration.json", "calibration");
  const fs::path session = ctx.out / "capture" / "measure";
  inputs.push_back(calib_path);
  inputs.push_back(require_input(session / "manifest.jsonl", "measurement capture"));
  const CalibrationResult calib = load_calibration(calib_path);
  CaptureFrames frames(session);
  const auto poses = frames.poses();
  if (poses.empty()) throw Error(ErrorCode::IoError, "measurement capture is empty");
  FringeSetSpec v = cfg.fringe;
  v.direction = FringeDirection::Vertical;
  const PhaseMaps maps = analyze_direction(frames.lookup(poses.front()), v, cfg.complementary, mod_threshold_counts(cfg));
  ReconstructionStats stats;
  const PointCloud cloud = reconstruct_cloud(maps, calib, cfg.fringe.period_px, cfg.recon_scale, &stats);
  write_ply(dir / "cloud.ply", cloud);
  write_mask_pgm(dir / "mask.pgm", maps.mask);
  write_json_file(dir / "stats.json", {{"points", cloud.size()},
                                       {"valid_pixels", stats.valid_pixels},
                                       {"singular_skipped", stats.singular_skipped},
                                       {"condition_log10_histogram", stats.condition_histogram},
                                       {"scale", cfg.recon_scale}});
}

std::optional<TriangleMesh> reference_mesh(const PipelineConfig& cfg, const Scene* scene) {
  if (!cfg.reference_mesh.empty()) return read_ply_mesh(resolve_path(cfg.base_dir, cfg.reference_mesh));
  if (!scene) return std::nullopt;
  for (const auto& o : scene->objects)
    if (const auto* s = std::get_if<SphereGeom>(&o.geometry)) return make_uv_sphere(s->center, s->radius, 180, 360);
  return std::nullopt;
}

void stage_validate(const StageContext& ctx, const fs::path& dir, StageResult& res, std::vector<fs::path>& inputs) {
  const auto& cfg = ctx.cfg;
  const fs::path cloud_path = require_input(ctx.out / "reconstruct" / "cloud.ply", "reconstructed cloud");
  inputs.push_back(cloud_path);
  const PointCloud cloud = read_ply_cloud(cloud_path);
  const SphereFit fit = fit_sphere_msac(cloud, cfg.msac_threshold_mm, cfg.msac_max_trials, cfg.seed);
  json report = sphere_fit_to_json(fit, cfg.sphere_radius_mm);
  report["seed"] = cfg.seed;
  write_json_file(dir / "sphere_fit.json", report);

  std::optional<Scene> scene;
  if (!cfg.scene.empty() || !cfg.scene_inline.is_null()) scene = pipeline_scene(cfg);
  if (!cfg.reference_mesh.empty()) inputs.push_back(resolve_path(cfg.base_dir, cfg.reference_mesh));
  if (auto mesh = reference_mesh(cfg, scene ? &*scene : nullptr)) {
    // The cloud lives in the camera frame; the reference lives in the scene frame.
    PointCloud world = cloud;
    if (scene) {
      const RigidPose cam_to_world = scene->camera.pose.inverse();
      for (auto& p : world.points) p = cam_to_world.apply(p);
    }
    const C2MReport c2m = cloud_to_mesh(world, *mesh, cfg.histogram_bins);
    write_json_file(dir / "c2m.json", c2m_to_json(c2m));
    write_histogram_csv(dir / "c2m_histogram.csv", c2m);
  } else {
    res.warnings.push_back("no reference geometry; C2M report skipped");
  }

  const auto err = radial_error(fit, cfg.sphere_radius_mm);
  if (err.absolute_mm > cfg.max_radial_error_mm || err.relative > cfg.max_relative_error ||
      fit.inlier_fraction() < cfg.min_inlier_fraction) {
    char buf[240];
    std::snprintf(buf, sizeof buf, "sphere fit r=%.4f mm (error %.4f mm, %.3f%%, inliers %.2f%%) misses bounds",
                  fit.radius, err.absolute_mm, 100 * err.relative, 100 * fit.inlier_fraction());
    throw ThresholdMiss{buf};
  }
}

void stage_twin(const StageContext& ctx, const fs::path& dir, StageResult&, std::vector<fs::path>& inputs) {
  const auto& cfg = ctx.cfg;
  const fs::path calib_path = cfg.twin_calibration.empty()
                                  ? require_input(ctx.out / "calibrate" / "calibration.json", "calibration")
                                  : require_input(resolve_path(cfg.base_dir, cfg.twin_calibration), "calibration");
  inputs.push_back(calib_path);
  const json cj = read_json_file(calib_path);
  const ProjectorModel pm = projector_model_from_json(cj);
  const ExtentSweep sweep = extent_linearity_sweep(pm.k, pm.mext, pm.k.width, pm.k.height, cfg.twin_z_mm);
  json out = sweep_to_json(sweep);
  out["resolution"] = {pm.k.width, pm.k.height};
  if (cfg.twin_pixel_size_mm > 0 && cj.contains("camera")) {
    const Intrinsics kc = intrinsics_from_json(cj["camera"].at("intrinsics"));
    const CameraTransferSpec spec{kc.fx, kc.fy, kc.width, kc.height, cfg.twin_pixel_size_mm};
    out["camera"] = sim_params_to_json(camera_params_to_sim(spec));
    out["camera"]["pixel_size_mm"] = cfg.twin_pixel_size_mm;
  }
  write_json_file(dir / "extent.json", out);
  write_sweep_csv(dir / "sweep.csv", sweep);
}

using StageFn = void (*)(const StageContext&, const fs::path&, StageResult&, std::vector<fs::path>&);

StageFn stage_fn(Stage s) {
  switch (s) {
    case Stage::Patterns: return stage_patterns;
    case Stage::Board: return stage_board;
    case Stage::Capture: return stage_capture;
    case Stage::Calibrate: return stage_calibrate;
    case Stage::Reconstruct: return stage_reconstruct;
    case Stage::Validate: return stage_validate;
    case Stage::Twin: return stage_twin;
  }
  return nullptr;
}

std::vector<std::string> list_files(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(files.begin(), files.end());
  return files;
}

/// External inputs named by the config must exist before any stage runs.
void precheck(const PipelineConfig& cfg, const std::vector<Stage>& stages) {
  auto has = [&](Stage s) { return std::find(stages.begin(), stages.end(), s) != stages.end(); };
  auto need = [&](const fs::path& p, const char* what) {
    const fs::path r = resolve_path(cfg.base_dir, p);
    if (!fs::exists(r)) throw Error(ErrorCode::ConfigError, std::string(what) + " not found: " + r.string());
  };
  const bool scene_needed = has(Stage::Capture) || has(Stage::Calibrate);
  if (scene_needed) {
    if (!cfg.scene.empty())
      need(cfg.scene, "scene file");
    else if (cfg.scene_inline.is_null())
      throw Error(ErrorCode::ConfigError, "no scene configured");
  }
  if (has(Stage::Validate) && !cfg.scene.empty()) need(cfg.scene, "scene file");
  if (has(Stage::Validate) && !cfg.reference_mesh.empty()) need(cfg.reference_mesh, "reference mesh");
  if (has(Stage::Twin) && !cfg.twin_calibration.empty()) need(cfg.twin_calibration, "twin calibration");
}

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Patterns: return "patterns";
    case Stage::Board: return "board";
    case Stage::Capture: return "capture";
    case Stage::Calibrate: return "calibrate";
    case Stage::Reconstruct: return "reconstruct";
    case Stage::Validate: return "validate";
    case Stage::Twin: return "twin";
  }
  return "?";
}

std::vector<Stage> parse_stages(const std::string& list) {
  if (list == "all") return {std::begin(kAllStages), std::end(kAllStages)};
  std::set<int> picked;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    const std::string name = list.substr(pos, comma - pos);
    bool found = false;
    for (Stage s : kAllStages)
      if (name == stage_name(s)) {
        picked.insert(static_cast<int>(s));
        found = true;
      }
    if (!found) throw Error(ErrorCode::ConfigError, "unknown stage '" + name + "'");
    pos = comma + 1;
  }
  std::vector<Stage> out;
  for (int s : picked) out.push_back(static_cast<Stage>(s));
  return out;
}

json PipelineConfig::to_json() const {
  json j;
  if (!scene.empty())
    j["scene"] = scene.generic_string();
  else
    j["scene"] = scene_inline;
  j["output_dir"] = output_dir.generic_string();
  j["seed"] = seed;
  j["patterns"] = {{"period_px", fringe.period_px},
                   {"n_steps", fringe.n_steps},
                   {"proj_width", fringe.proj_width},
                   {"proj_height", fringe.proj_height},
                   {"complementary", complementary},
                   {"format", image_format == ImageFormat::Png ? "png" : "pgm"}};
  j["board"] = board_spec_json(board);
  j["poses"] = {{"count", poses.count},
                {"translation_mm", poses.translation_mm},
                {"tilt_min_deg", poses.tilt_min_deg},
                {"tilt_max_deg", poses.tilt_max_deg},
                {"distance_mm", poses.distance_mm}};
  j["calibration"] = {{"max_stereo_rms_px", max_stereo_rms_px}, {"max_proj_rms_px", max_proj_rms_px}};
  j["reconstruction"] = {{"scale", recon_scale}, {"modulation_threshold", modulation_threshold}};
  j["validation"] = {{"sphere_radius_mm", sphere_radius_mm},
                     {"msac_threshold_mm", msac_threshold_mm},
                     {"msac_max_trials", msac_max_trials},
                     {"max_radial_error_mm", max_radial_error_mm},
                     {"max_relative_error", max_relative_error},
                     {"min_inlier_fraction", min_inlier_fraction},
                     {"reference_mesh", reference_mesh.generic_string()},
                     {"histogram_bins", histogram_bins}};
  j["twin"] = {{"calibration", twin_calibration.generic_string()},
               {"z_mm", twin_z_mm},
               {"pixel_size_mm", twin_pixel_size_mm}};
  return j;
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  c.base_dir = base_dir;
  try {
    check_keys(j, {"scene", "output_dir", "seed", "patterns", "board", "poses", "calibration", "reconstruction",
                   "validation", "twin"},
               "config");
    if (j.contains("scene")) {
      if (j["scene"].is_string())
        c.scene = j["scene"].get<std::string>();
      else
        c.scene_inline = j["scene"];
    }
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    read_opt(j, "seed", c.seed);
    if (j.contains("patterns")) {
      const auto& p = j["patterns"];
      check_keys(p, {"period_px", "n_steps", "proj_width", "proj_height", "complementary", "format"}, "patterns");
      read_opt(p, "period_px", c.fringe.period_px);
      read_opt(p, "n_steps", c.fringe.n_steps);
      read_opt(p, "proj_width", c.fringe.proj_width);
      read_opt(p, "proj_height", c.fringe.proj_height);
      read_opt(p, "complementary", c.complementary);
      if (p.contains("format")) {
        const auto f = p["format"].get<std::string>();
        if (f != "png" && f != "pgm") throw Error(ErrorCode::ConfigError, "patterns.format must be png or pgm");
        c.image_format = f == "png" ? ImageFormat::Png : ImageFormat::Pgm;
      }
    }
    if (j.contains("board")) {
      const auto& b = j["board"];
      check_keys(b, {"rows", "cols", "circle_diameter_mm", "center_spacing_mm", "border_mm", "plane_width_m",
                     "plane_height_m", "pixels_per_mm", "circle_level"},
                 "board");
      read_opt(b, "rows", c.board.rows);
      read_opt(b, "cols", c.board.cols);
      read_opt(b, "circle_diameter_mm", c.board.d_circle_mm);
      read_opt(b, "center_spacing_mm", c.board.d_centers_mm);
      read_opt(b, "border_mm", c.board.border_mm);
      read_opt(b, "plane_width_m", c.board.plane_w_m);
      read_opt(b, "plane_height_m", c.board.plane_h_m);
      read_opt(b, "pixels_per_mm", c.board.px_per_mm);
      read_opt(b, "circle_level", c.board.circle_level);
    }
    if (j.contains("poses")) {
      const auto& p = j["poses"];
      check_keys(p, {"count", "translation_mm", "tilt_min_deg", "tilt_max_deg", "distance_mm"}, "poses");
      read_opt(p, "count", c.poses.count);
      read_opt(p, "translation_mm", c.poses.translation_mm);
      read_opt(p, "tilt_min_deg", c.poses.tilt_min_deg);
      read_opt(p, "tilt_max_deg", c.poses.tilt_max_deg);
      read_opt(p, "distance_mm", c.poses.distance_mm);
    }
    if (j.contains("calibration")) {
      const auto& p = j["calibration"];
      check_keys(p, {"max_stereo_rms_px", "max_proj_rms_px"}, "calibration");
      read_opt(p, "max_stereo_rms_px", c.max_stereo_rms_px);
      read_opt(p, "max_proj_rms_px", c.max_proj_rms_px);
    }
    if (j.contains("reconstruction")) {
      const auto& p = j["reconstruction"];
      check_keys(p, {"scale", "modulation_threshold"}, "reconstruction");
      read_opt(p, "scale", c.recon_scale);
      read_opt(p, "modulation_threshold", c.modulation_threshold);
    }
    if (j.contains("validation")) {
      const auto& p = j["validation"];
      check_keys(p, {"sphere_radius_mm", "msac_threshold_mm", "msac_max_trials", "max_radial_error_mm",
                     "max_relative_error", "min_inlier_fraction", "reference_mesh", "histogram_bins"},
                 "validation");
      read_opt(p, "sphere_radius_mm", c.sphere_radius_mm);
      read_opt(p, "msac_threshold_mm", c.msac_threshold_mm);
      read_opt(p, "msac_max_trials", c.msac_max_trials);
      read_opt(p, "max_radial_error_mm", c.max_radial_error_mm);
      read_opt(p, "max_relative_error", c.max_relative_error);
      read_opt(p, "min_inlier_fraction", c.min_inlier_fraction);
      if (p.contains("reference_mesh")) c.reference_mesh = p["reference_mesh"].get<std::string>();
      read_opt(p, "histogram_bins", c.histogram_bins);
    }
    if (j.contains("twin")) {
      const auto& p = j["twin"];
      check_keys(p, {"calibration", "z_mm", "pixel_size_mm"}, "twin");
      if (p.contains("calibration")) c.twin_calibration = p["calibration"].get<std::string>();
      read_opt(p, "z_mm", c.twin_z_mm);
      read_opt(p, "pixel_size_mm", c.twin_pixel_size_mm);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
  c.fringe.validate();
  c.board.validate();
  c.poses.validate();
  if (!(c.modulation_threshold >= 0) || !(c.recon_scale > 0) || !(c.msac_threshold_mm > 0) ||
      c.msac_max_trials < 1 || c.histogram_bins < 1 || !(c.max_stereo_rms_px >= 0) || !(c.max_proj_rms_px >= 0))
    throw Error(ErrorCode::ConfigError, "config bounds must be non-negative (scale, MSAC threshold, trials, bins > 0)");
  for (double z : c.twin_z_mm)
    if (!(z > 0)) throw Error(ErrorCode::ConfigError, "twin.z_mm entries must be > 0");
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorCode::ConfigError, "config file not found: " + p.string());
  return pipeline_config_from_json(read_json_file(p), p.parent_path());
}

Scene pipeline_scene(const PipelineConfig& config) {
  if (!config.scene.empty()) {
    const fs::path p = resolve_path(config.base_dir, config.scene);
    if (!fs::exists(p)) throw Error(ErrorCode::ConfigError, "scene file not found: " + p.string());
    return load_scene(p);
  }
  if (!config.scene_inline.is_null()) return scene_from_json(config.scene_inline, config.base_dir);
  throw Error(ErrorCode::ConfigError, "no scene configured");
}

PipelineOutcome run_pipeline(const PipelineConfig& config, const std::vector<Stage>& stages, const PipelineLog& log) {
  PipelineOutcome outcome;
  const fs::path out = resolve_path(config.base_dir, config.output_dir);
  const std::string config_hash = hex64(hash_string(config.to_json().dump()));
  try {
    precheck(config, stages);
  } catch (const Error& e) {
    outcome.exit_code = 2;
    outcome.message = e.what();
    return outcome;
  }
  const StageContext ctx{config, out, config_hash};
  for (Stage s : stages) {
    const std::string name = stage_name(s);
    const fs::path final_dir = out / name;
    const fs::path scratch = out / ("." + name + ".partial");
    StageResult res;
    res.stage = s;
    std::vector<fs::path> inputs;
    std::optional<std::string> miss;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      fs::remove_all(scratch);
      fs::create_directories(scratch);
      try {
        stage_fn(s)(ctx, scratch, res, inputs);
      } catch (const ThresholdMiss& m) {
        miss = m.message;
      }
      res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      res.artifacts = list_files(scratch);

      json in = json::array();
      for (const auto& p : inputs) in.push_back({{"path", p.generic_string()}, {"hash", hex64(hash_file(p))}});
      json arts = json::array();
      for (const auto& a : res.artifacts) arts.push_back({{"path", a}, {"hash", hex64(hash_file(scratch / a))}});
      json manifest = {{"stage", name},
                       {"version", kVersion},
                       {"config_hash", config_hash},
                       {"seed", config.seed},
                       {"threads", thread_count()},
                       {"seconds", res.seconds},
                       {"inputs", in},
                       {"artifacts", arts},
                       {"warnings", res.warnings},
                       {"status", miss ? "threshold_exceeded" : "ok"}};
      if (miss) manifest["message"] = *miss;
      write_json_file(scratch / "run_manifest.json", manifest);
      fs::remove_all(final_dir);
      fs::rename(scratch, final_dir);
    } catch (const std::exception& e) {
      std::error_code ec;
      fs::remove_all(scratch, ec);
      outcome.failed_stage = name;
      std::string provenance;
      for (const auto& p : inputs) provenance += (provenance.empty() ? "" : ", ") + p.generic_string();
      outcome.message = "stage '" + name + "' failed: " + e.what() +
                        (provenance.empty() ? std::string() : " (inputs: " + provenance + ")");
      const auto* err = dynamic_cast<const Error*>(&e);
      outcome.exit_code = err && err->code() == ErrorCode::ConfigError ? 2 : 3;
      outcome.stages.push_back(res);
      return outcome;
    }
    if (log) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "[%s] %zu artifacts in %.2f s", name.c_str(), res.artifacts.size(), res.seconds);
      log(buf);
      for (const auto& w : res.warnings) log("[" + name + "] warning: " + w);
    }
    outcome.stages.push_back(res);
    if (miss) {
      outcome.exit_code = 4;
      outcome.failed_stage = name;
      outcome.message = "stage '" + name + "' acceptance threshold: " + *miss;
      return outcome;
    }
  }
  return outcome;
}

}  // namespace vfpp
