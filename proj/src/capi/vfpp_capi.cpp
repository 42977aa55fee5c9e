#include "vfpp/vfpp.h"

#include <exception>
#include <string>

#include "error.hpp"
#include "io_util.hpp"
#include "metrology.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "ply.hpp"
#include "render.hpp"
#include "twin.hpp"
#include "version.hpp"

struct vfpp_config {
  vfpp::PipelineConfig cfg;
  std::string json;
};

struct vfpp_cloud {
  vfpp::PointCloud cloud;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
vfpp_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return VFPP_OK;
  } catch (const vfpp::Error& e) {
    g_last_error = e.what();
    return static_cast<vfpp_status>(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return VFPP_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return VFPP_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VFPP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return VFPP_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw vfpp::Error(vfpp::ErrorCode::InvalidArgument, what);
}

}  // namespace

extern "C" {

const char* vfpp_version(void) { return vfpp::kVersion; }

const char* vfpp_status_name(vfpp_status status) {
  if (status == VFPP_OK) return "Ok";
  if (status == VFPP_ERR_INTERNAL) return "Internal";
  if (status >= VFPP_ERR_INVALID_ARGUMENT && status <= VFPP_ERR_THRESHOLD_EXCEEDED)
    return vfpp::error_code_name(static_cast<vfpp::ErrorCode>(status));
  return "Unknown";
}

const char* vfpp_last_error(void) { return g_last_error.c_str(); }

void vfpp_set_threads(int n) { vfpp::set_thread_count(n < 0 ? 0 : n); }

vfpp_status vfpp_config_load(const char* path, vfpp_config** out) {
  return guarded([&] {
    require(path && out, "path and out are required");
    auto* c = new vfpp_config{vfpp::load_pipeline_config(path), {}};
    c->json = c->cfg.to_json().dump();
    *out = c;
  });
}

vfpp_status vfpp_config_parse(const char* json_text, const char* base_dir, vfpp_config** out) {
  return guarded([&] {
    require(json_text && out, "json_text and out are required");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw vfpp::Error(vfpp::ErrorCode::ConfigError, std::string("config JSON: ") + e.what());
    }
    auto* c = new vfpp_config{vfpp::pipeline_config_from_json(j, base_dir ? base_dir : ""), {}};
    c->json = c->cfg.to_json().dump();
    *out = c;
  });
}

void vfpp_config_free(vfpp_config* config) { delete config; }

const char* vfpp_config_json(const vfpp_config* config) { return config ? config->json.c_str() : ""; }

vfpp_status vfpp_pipeline_run(const vfpp_config* config, const char* stages, vfpp_log_fn log, void* user,
                              int* exit_code) {
  int code = 3;
  std::string message;
  const vfpp_status st = guarded([&] {
    require(config && stages, "config and stages are required");
    const auto list = vfpp::parse_stages(stages);
    vfpp::PipelineLog sink;
    if (log) sink = [&](const std::string& line) { log(line.c_str(), user); };
    const auto outcome = vfpp::run_pipeline(config->cfg, list, sink);
    code = outcome.exit_code;
    message = outcome.message;
  });
  if (st != VFPP_OK) {
    if (st == VFPP_ERR_CONFIG || st == VFPP_ERR_INVALID_ARGUMENT) code = 2;
  } else {
    g_last_error = message;
  }
  if (exit_code) *exit_code = code;
  return st;
}

vfpp_status vfpp_render_frame(const char* scene_path, const char* pattern_path, const char* out_path) {
  return guarded([&] {
    require(scene_path && out_path, "scene_path and out_path are required");
    const vfpp::Scene scene = vfpp::load_scene(scene_path);
    if (pattern_path) {
      const vfpp::GrayImage16 pattern = vfpp::read_image(pattern_path);
      vfpp::write_image(out_path, vfpp::render_frame(scene, &pattern));
    } else {
      vfpp::write_image(out_path, vfpp::render_frame(scene, nullptr));
    }
  });
}

vfpp_status vfpp_cloud_create(const double* xyz, size_t count, vfpp_cloud** out) {
  return guarded([&] {
    require(out && (xyz || count == 0), "xyz and out are required");
    auto* c = new vfpp_cloud;
    c->cloud.points.reserve(count);
    for (size_t i = 0; i < count; ++i) c->cloud.points.emplace_back(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
    *out = c;
  });
}

vfpp_status vfpp_cloud_load(const char* ply_path, vfpp_cloud** out) {
  return guarded([&] {
    require(ply_path && out, "ply_path and out are required");
    *out = new vfpp_cloud{vfpp::read_ply_cloud(ply_path)};
  });
}

vfpp_status vfpp_cloud_save(const vfpp_cloud* cloud, const char* ply_path, int ascii) {
  return guarded([&] {
    require(cloud && ply_path, "cloud and ply_path are required");
    vfpp::write_ply(ply_path, cloud->cloud, ascii ? vfpp::PlyEncoding::Ascii : vfpp::PlyEncoding::BinaryLittleEndian);
  });
}

size_t vfpp_cloud_size(const vfpp_cloud* cloud) { return cloud ? cloud->cloud.size() : 0; }

vfpp_status vfpp_cloud_points(const vfpp_cloud* cloud, double* xyz) {
  return guarded([&] {
    require(cloud && xyz, "cloud and xyz are required");
    for (size_t i = 0; i < cloud->cloud.size(); ++i)
      for (int a = 0; a < 3; ++a) xyz[3 * i + a] = cloud->cloud.points[i][a];
  });
}

void vfpp_cloud_free(vfpp_cloud* cloud) { delete cloud; }

vfpp_status vfpp_fit_sphere(const vfpp_cloud* cloud, double inlier_threshold_mm, int max_trials, uint64_t seed,
                            vfpp_sphere_fit* out) {
  return guarded([&] {
    require(cloud && out, "cloud and out are required");
    const auto fit = vfpp::fit_sphere_msac(cloud->cloud, inlier_threshold_mm, max_trials, seed);
    for (int a = 0; a < 3; ++a) out->center[a] = fit.center[a];
    out->radius = fit.radius;
    out->inliers = fit.inliers;
    out->total = fit.total;
    out->trials = fit.trials;
  });
}

vfpp_status vfpp_cloud_to_mesh(const vfpp_cloud* cloud, const char* mesh_ply, int bins, const char* json_path,
                               const char* csv_path, vfpp_c2m_summary* out) {
  return guarded([&] {
    require(cloud && mesh_ply, "cloud and mesh_ply are required");
    const auto mesh = vfpp::read_ply_mesh(mesh_ply);
    const auto rep = vfpp::cloud_to_mesh(cloud->cloud, mesh, bins);
    if (json_path) vfpp::write_json_file(json_path, vfpp::c2m_to_json(rep));
    if (csv_path) vfpp::write_histogram_csv(csv_path, rep);
    if (out) *out = {rep.mean, rep.rms, rep.max, rep.distances.size()};
  });
}

vfpp_status vfpp_icp(const vfpp_cloud* source, const vfpp_cloud* target, int max_iterations, double tolerance,
                     vfpp_icp_summary* out, vfpp_cloud** aligned) {
  return guarded([&] {
    require(source && target && out, "source, target and out are required");
    auto res = vfpp::icp_register(source->cloud, target->cloud.points, max_iterations, tolerance);
    for (int i = 0; i < 9; ++i) out->rotation[i] = res.pose.R(i / 3, i % 3);
    for (int a = 0; a < 3; ++a) out->translation[a] = res.pose.t[a];
    out->rms = res.rms;
    out->iterations = res.iterations;
    if (aligned) *aligned = new vfpp_cloud{std::move(res.aligned)};
  });
}

vfpp_status vfpp_projected_extent(const double k[4], int res_u, int res_v, const double mext[12], double z_mm,
                                  vfpp_extent* out) {
  return guarded([&] {
    require(k && mext && out, "k, mext and out are required");
    vfpp::Intrinsics in;
    in.fx = k[0];
    in.fy = k[1];
    in.ox = k[2];
    in.oy = k[3];
    in.width = res_u;
    in.height = res_v;
    in.validate();
    vfpp::Mat34 m;
    for (int i = 0; i < 12; ++i) m(i / 4, i % 4) = mext[i];
    const auto e = vfpp::projected_extent_at_distance(in, m, res_u, res_v, z_mm);
    *out = {e.z, e.width, e.height};
  });
}

vfpp_status vfpp_twin_extent_file(const char* calibration_json, const double* z_mm, size_t count,
                                  const char* json_path, const char* csv_path, vfpp_extent* out) {
  return guarded([&] {
    require(calibration_json && z_mm && count > 0, "calibration and at least one distance are required");
    const auto pm = vfpp::projector_model_from_json(vfpp::read_json_file(calibration_json));
    const std::vector<double> zs(z_mm, z_mm + count);
    const auto sweep = vfpp::extent_linearity_sweep(pm.k, pm.mext, pm.k.width, pm.k.height, zs);
    if (json_path) {
      auto j = vfpp::sweep_to_json(sweep);
      j["resolution"] = {pm.k.width, pm.k.height};
      vfpp::write_json_file(json_path, j);
    }
    if (csv_path) vfpp::write_sweep_csv(csv_path, sweep);
    if (out)
      for (size_t i = 0; i < count; ++i) out[i] = {sweep.rows[i].z, sweep.rows[i].width, sweep.rows[i].height};
  });
}

vfpp_status vfpp_camera_to_sim(double fx, double fy, int width, int height, double pixel_size_mm, double out[3]) {
  return guarded([&] {
    require(out != nullptr, "out is required");
    const auto p = vfpp::camera_params_to_sim({fx, fy, width, height, pixel_size_mm});
    out[0] = p.focal_mm;
    out[1] = p.aperture_h_mm;
    out[2] = p.aperture_v_mm;
  });
}

}  // extern "C"
