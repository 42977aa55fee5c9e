// fpp: command-line front end. Talks to the library only through vfpp.h.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vfpp/vfpp.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;
constexpr int kExitThreshold = 4;

int exit_for(vfpp_status st) {
  switch (st) {
    case VFPP_OK: return 0;
    case VFPP_ERR_CONFIG:
    case VFPP_ERR_INVALID_ARGUMENT: return kExitConfig;
    case VFPP_ERR_THRESHOLD_EXCEEDED: return kExitThreshold;
    default: return kExitStage;
  }
}

int report(vfpp_status st, const char* what) {
  if (st == VFPP_OK) return 0;
  std::fprintf(stderr, "fpp %s: %s\n", what, vfpp_last_error());
  return exit_for(st);
}

std::string abs_path(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

void log_line(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

struct CloudHandle {
  vfpp_cloud* p = nullptr;
  ~CloudHandle() { vfpp_cloud_free(p); }
};

/// Options shared by every config-driven subcommand. A flag overrides the
/// config file; the config file overrides built-in defaults.
struct ConfigFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  json overrides = json::object();

  void attach(CLI::App* sub) {
    sub->add_option("--config", config, "pipeline config JSON")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (default: $VFPP_OUTPUT_ROOT or ./fpp_out)");
    sub->add_option("--seed", seed, "seed for pose jitter and MSAC (default 0)");
    sub->add_option("--threads", threads, "worker cap (0 = all cores)")->check(CLI::NonNegativeNumber);
  }

  template <typename T>
  void set(const char* section, const char* key, const std::optional<T>& v) {
    if (v) overrides[section][key] = *v;
  }
};

int run_stages(ConfigFlags& f, const std::string& stages) {
  vfpp_set_threads(f.threads);
  json cfg = json::object();
  std::string base_dir = fs::current_path().string();
  if (!f.config.empty()) {
    try {
      std::ifstream in(f.config);
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      std::fprintf(stderr, "fpp: config %s: %s\n", f.config.c_str(), e.what());
      return kExitConfig;
    }
    base_dir = fs::absolute(f.config).parent_path().string();
  }
  if (!cfg.is_object()) {
    std::fprintf(stderr, "fpp: config must be a JSON object\n");
    return kExitConfig;
  }
  for (auto it = f.overrides.begin(); it != f.overrides.end(); ++it) {
    if (it.value().is_object()) {
      if (!cfg.contains(it.key()) || !cfg[it.key()].is_object()) cfg[it.key()] = json::object();
      for (auto kv = it.value().begin(); kv != it.value().end(); ++kv) cfg[it.key()][kv.key()] = kv.value();
    } else {
      cfg[it.key()] = it.value();
    }
  }
  if (!f.out.empty()) {
    cfg["output_dir"] = abs_path(f.out);
  } else if (!cfg.contains("output_dir")) {
    const char* env = std::getenv("VFPP_OUTPUT_ROOT");
    cfg["output_dir"] = abs_path(env && *env ? env : "fpp_out");
  }
  if (f.seed) cfg["seed"] = *f.seed;

  vfpp_config* handle = nullptr;
  if (vfpp_status st = vfpp_config_parse(cfg.dump().c_str(), base_dir.c_str(), &handle); st != VFPP_OK)
    return report(st, "config");
  int code = 0;
  const vfpp_status st = vfpp_pipeline_run(handle, stages.c_str(), log_line, nullptr, &code);
  vfpp_config_free(handle);
  if (st != VFPP_OK) return report(st, "pipeline");
  if (code != 0) std::fprintf(stderr, "fpp: %s\n", vfpp_last_error());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual fringe projection profilometry toolkit"};
  app.set_version_flag("--version", std::string(vfpp_version()));
  app.require_subcommand(1);
  int exit_code = 0;

  // pipeline
  ConfigFlags pipe;
  std::string stages = "all";
  std::string scene, calib;
  std::vector<double> zs;
  auto* sp = app.add_subcommand("pipeline", "run pipeline stages from a config");
  pipe.attach(sp);
  sp->add_option("--stages", stages, "all or comma list of patterns,board,capture,calibrate,reconstruct,validate,twin");
  sp->add_option("--scene", scene, "scene JSON (overrides the config)");
  sp->add_option("--calib", calib, "calibration JSON for the twin stage");
  sp->add_option("--z", zs, "twin evaluation distances in mm");
  sp->callback([&] {
    if (!scene.empty()) pipe.overrides["scene"] = abs_path(scene);
    if (!calib.empty()) pipe.overrides["twin"]["calibration"] = abs_path(calib);
    if (!zs.empty()) pipe.overrides["twin"]["z_mm"] = zs;
    exit_code = run_stages(pipe, stages);
  });

  // gen-patterns
  ConfigFlags gp;
  std::optional<int> period, steps, pw, ph;
  std::optional<std::string> format;
  bool no_comp = false;
  auto* sg = app.add_subcommand("gen-patterns", "write the fringe and Gray-code pattern set");
  gp.attach(sg);
  sg->add_option("--period", period, "fringe period in projector pixels");
  sg->add_option("--steps", steps, "phase steps");
  sg->add_option("--proj-width", pw);
  sg->add_option("--proj-height", ph);
  sg->add_option("--format", format)->check(CLI::IsMember({"png", "pgm"}));
  sg->add_flag("--no-complementary", no_comp, "omit the parity frame");
  sg->callback([&] {
    gp.set("patterns", "period_px", period);
    gp.set("patterns", "n_steps", steps);
    gp.set("patterns", "proj_width", pw);
    gp.set("patterns", "proj_height", ph);
    gp.set("patterns", "format", format);
    if (no_comp) gp.overrides["patterns"]["complementary"] = false;
    exit_code = run_stages(gp, "patterns");
  });

  // gen-board
  ConfigFlags gb;
  std::optional<int> rows, cols;
  std::optional<double> circle_mm, spacing_mm, border_mm, plane_w, plane_h, px_per_mm;
  auto* sb = app.add_subcommand("gen-board", "write the asymmetric circle-grid board texture");
  gb.attach(sb);
  sb->add_option("--rows", rows);
  sb->add_option("--cols", cols);
  sb->add_option("--circle-mm", circle_mm, "circle diameter");
  sb->add_option("--spacing-mm", spacing_mm, "center spacing");
  sb->add_option("--border-mm", border_mm);
  sb->add_option("--plane-width-m", plane_w);
  sb->add_option("--plane-height-m", plane_h);
  sb->add_option("--px-per-mm", px_per_mm);
  sb->callback([&] {
    gb.set("board", "rows", rows);
    gb.set("board", "cols", cols);
    gb.set("board", "circle_diameter_mm", circle_mm);
    gb.set("board", "center_spacing_mm", spacing_mm);
    gb.set("board", "border_mm", border_mm);
    gb.set("board", "plane_width_m", plane_w);
    gb.set("board", "plane_height_m", plane_h);
    gb.set("board", "pixels_per_mm", px_per_mm);
    exit_code = run_stages(gb, "board");
  });

  // capture
  ConfigFlags cap;
  std::string cap_scene;
  std::optional<int> n_poses;
  auto* sc = app.add_subcommand("capture", "render the calibration and measurement sessions");
  cap.attach(sc);
  sc->add_option("--scene", cap_scene, "scene JSON (overrides the config)");
  sc->add_option("--poses", n_poses, "calibration pose count");
  sc->callback([&] {
    if (!cap_scene.empty()) cap.overrides["scene"] = abs_path(cap_scene);
    cap.set("poses", "count", n_poses);
    exit_code = run_stages(cap, "capture");
  });

  // calibrate
  ConfigFlags cal;
  std::optional<double> max_rms;
  auto* scal = app.add_subcommand("calibrate", "stereo-calibrate from a captured session");
  cal.attach(scal);
  scal->add_option("--max-rms", max_rms, "reprojection RMS bound for both devices (px)");
  scal->callback([&] {
    cal.set("calibration", "max_stereo_rms_px", max_rms);
    cal.set("calibration", "max_proj_rms_px", max_rms);
    exit_code = run_stages(cal, "calibrate");
  });

  // reconstruct
  ConfigFlags rec;
  std::optional<double> scale, mod_thr;
  auto* srec = app.add_subcommand("reconstruct", "triangulate the measurement capture");
  rec.attach(srec);
  srec->add_option("--scale", scale, "coordinate scale factor");
  srec->add_option("--mod-threshold", mod_thr, "modulation mask threshold, fraction of full scale");
  srec->callback([&] {
    rec.set("reconstruction", "scale", scale);
    rec.set("reconstruction", "modulation_threshold", mod_thr);
    exit_code = run_stages(rec, "reconstruct");
  });

  // render
  std::string r_scene, r_pattern, r_out;
  int r_threads = 0;
  auto* sr = app.add_subcommand("render", "render one frame of a scene");
  sr->add_option("--scene", r_scene)->required()->check(CLI::ExistingFile);
  sr->add_option("--pattern", r_pattern, "projected image (omit to switch the projector off)")
      ->check(CLI::ExistingFile);
  sr->add_option("-o,--output", r_out, "output .png or .pgm")->required();
  sr->add_option("--threads", r_threads)->check(CLI::NonNegativeNumber);
  sr->callback([&] {
    vfpp_set_threads(r_threads);
    exit_code = report(vfpp_render_frame(r_scene.c_str(), r_pattern.empty() ? nullptr : r_pattern.c_str(),
                                         r_out.c_str()),
                       "render");
  });

  // fit-sphere
  std::string fs_cloud, fs_json;
  double fs_tau = 1.0;
  int fs_trials = 2000, fs_threads = 0;
  std::uint64_t fs_seed = 0;
  std::optional<double> fs_radius, fs_max_err;
  auto* sf = app.add_subcommand("fit-sphere", "MSAC sphere fit of a PLY cloud");
  sf->add_option("--cloud", fs_cloud)->required()->check(CLI::ExistingFile);
  sf->add_option("--threshold", fs_tau, "inlier threshold in mm");
  sf->add_option("--trials", fs_trials, "maximum MSAC trials");
  sf->add_option("--seed", fs_seed);
  sf->add_option("--radius", fs_radius, "actual radius for the error report (mm)");
  sf->add_option("--max-error", fs_max_err, "radial error bound (mm); exceeding it exits with 4")->needs("--radius");
  sf->add_option("--json", fs_json, "report path");
  sf->add_option("--threads", fs_threads)->check(CLI::NonNegativeNumber);
  sf->callback([&] {
    vfpp_set_threads(fs_threads);
    CloudHandle cloud;
    if (int rc = report(vfpp_cloud_load(fs_cloud.c_str(), &cloud.p), "fit-sphere")) {
      exit_code = rc;
      return;
    }
    vfpp_sphere_fit fit{};
    if (int rc = report(vfpp_fit_sphere(cloud.p, fs_tau, fs_trials, fs_seed, &fit), "fit-sphere")) {
      exit_code = rc;
      return;
    }
    json j = {{"center_mm", {fit.center[0], fit.center[1], fit.center[2]}},
              {"radius_mm", fit.radius},
              {"inliers", fit.inliers},
              {"total", fit.total},
              {"inlier_fraction", fit.total ? double(fit.inliers) / fit.total : 0.0},
              {"inlier_threshold_mm", fs_tau},
              {"trials", fit.trials},
              {"seed", fs_seed}};
    if (fs_radius) {
      const double err = std::abs(fit.radius - *fs_radius);
      j["actual_radius_mm"] = *fs_radius;
      j["radial_error_mm"] = err;
      j["relative_error"] = err / *fs_radius;
      if (fs_max_err && err > *fs_max_err) exit_code = kExitThreshold;
    }
    std::printf("%s\n", j.dump(2).c_str());
    if (!fs_json.empty()) std::ofstream(fs_json) << j.dump(2) << "\n";
  });

  // c2m
  std::string c_cloud, c_mesh, c_json, c_csv;
  int c_bins = 20, c_threads = 0;
  auto* s2 = app.add_subcommand("c2m", "cloud-to-mesh distances");
  s2->add_option("--cloud", c_cloud)->required()->check(CLI::ExistingFile);
  s2->add_option("--mesh", c_mesh)->required()->check(CLI::ExistingFile);
  s2->add_option("--bins", c_bins)->check(CLI::PositiveNumber);
  s2->add_option("--json", c_json);
  s2->add_option("--csv", c_csv, "histogram table");
  s2->add_option("--threads", c_threads)->check(CLI::NonNegativeNumber);
  s2->callback([&] {
    vfpp_set_threads(c_threads);
    CloudHandle cloud;
    vfpp_c2m_summary sum{};
    vfpp_status st = vfpp_cloud_load(c_cloud.c_str(), &cloud.p);
    if (st == VFPP_OK)
      st = vfpp_cloud_to_mesh(cloud.p, c_mesh.c_str(), c_bins, c_json.empty() ? nullptr : c_json.c_str(),
                              c_csv.empty() ? nullptr : c_csv.c_str(), &sum);
    if ((exit_code = report(st, "c2m"))) return;
    std::printf("points %zu  mean %.6f mm  rms %.6f mm  max %.6f mm\n", sum.count, sum.mean, sum.rms, sum.max);
  });

  // icp
  std::string i_src, i_dst, i_aligned, i_json;
  int i_iter = 50, i_threads = 0;
  double i_tol = 1e-9;
  auto* si = app.add_subcommand("icp", "rigid point-to-point registration");
  si->add_option("--source", i_src)->required()->check(CLI::ExistingFile);
  si->add_option("--target", i_dst, "PLY cloud or mesh (vertices are used)")->required()->check(CLI::ExistingFile);
  si->add_option("--max-iter", i_iter)->check(CLI::PositiveNumber);
  si->add_option("--tol", i_tol, "stop when the RMS improves by less than this (mm)");
  si->add_option("--aligned", i_aligned, "write the aligned source cloud");
  si->add_option("--json", i_json);
  si->add_option("--threads", i_threads)->check(CLI::NonNegativeNumber);
  si->callback([&] {
    vfpp_set_threads(i_threads);
    CloudHandle src, dst, out;
    vfpp_icp_summary sum{};
    vfpp_status st = vfpp_cloud_load(i_src.c_str(), &src.p);
    if (st == VFPP_OK) st = vfpp_cloud_load(i_dst.c_str(), &dst.p);
    if (st == VFPP_OK) st = vfpp_icp(src.p, dst.p, i_iter, i_tol, &sum, i_aligned.empty() ? nullptr : &out.p);
    if (st == VFPP_OK && !i_aligned.empty()) st = vfpp_cloud_save(out.p, i_aligned.c_str(), 0);
    if ((exit_code = report(st, "icp"))) return;
    json j = {{"rotation", std::vector<double>(sum.rotation, sum.rotation + 9)},
              {"translation_mm", std::vector<double>(sum.translation, sum.translation + 3)},
              {"rms_mm", sum.rms},
              {"iterations", sum.iterations}};
    std::printf("%s\n", j.dump(2).c_str());
    if (!i_json.empty()) std::ofstream(i_json) << j.dump(2) << "\n";
  });

  // twin-extent
  std::string t_calib, t_json, t_csv;
  std::vector<double> t_z{1000.0};
  auto* st = app.add_subcommand("twin-extent", "metric size of the projected image at given distances");
  st->add_option("--calib", t_calib, "calibration JSON with projector intrinsics and extrinsics")
      ->required()
      ->check(CLI::ExistingFile);
  st->add_option("--z", t_z, "distances in mm");
  st->add_option("--json", t_json);
  st->add_option("--csv", t_csv);
  st->callback([&] {
    std::vector<vfpp_extent> out(t_z.size());
    const vfpp_status s = vfpp_twin_extent_file(t_calib.c_str(), t_z.data(), t_z.size(),
                                                t_json.empty() ? nullptr : t_json.c_str(),
                                                t_csv.empty() ? nullptr : t_csv.c_str(), out.data());
    if ((exit_code = report(s, "twin-extent"))) return;
    std::printf("z_mm,width_mm,height_mm\n");
    for (const auto& e : out) std::printf("%.3f,%.3f,%.3f\n", e.z_mm, e.width_mm, e.height_mm);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  return exit_code;
}
