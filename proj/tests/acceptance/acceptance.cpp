// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "calib.hpp"
#include "error.hpp"
#include "io_util.hpp"
#include "metrology.hpp"
#include "patterns.hpp"
#include "phase.hpp"
#include "pipeline.hpp"
#include "render.hpp"
#include "twin.hpp"

using namespace vfpp;
namespace fs = std::filesystem;

namespace {

const fs::path kData = fs::path(VFPP_SOURCE_DIR) / "data";

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double wrap_pi(double a) {
  a = std::remainder(a, 2 * M_PI);
  return a <= -M_PI ? a + 2 * M_PI : a;
}

Intrinsics published_projector() { return {1820.10, 1819.95, 455.74, 571.74, 912, 1140}; }

Mat34 published_extrinsics() {
  Mat34 m;
  m << 1.0000, 0.0000, -0.0001, 89.72, -0.0000, 0.9999, -0.0012, -71.70, 0.0001, 0.0012, 0.9999, -0.75;
  return m;
}

// ---------------------------------------------------------------------------

Outcome phase_round_trip() {
  // Continuous inputs over a sweep of phases.
  double worst_cont = 0;
  for (int i = 0; i < 2000; ++i) {
    const double phi = -M_PI + (i + 0.5) * 2 * M_PI / 2000;
    std::vector<RasterF64> st;
    for (int n = 1; n <= 18; ++n) st.emplace_back(1, 1, 100 + 50 * std::cos(phi + 2 * M_PI * n / 18));
    worst_cont = std::max(worst_cont, std::abs(wrap_pi(compute_wrapped_phase(st, 18).wrapped.at(0, 0) - phi)));
  }
  // Quantized 960 x 960 full chain, timed.
  FringeSetSpec f;
  f.n_steps = 18;
  f.period_px = 40;
  f.proj_width = f.proj_height = 960;
  GraySetSpec g;
  g.period_px = 40;
  g.proj_width = g.proj_height = 960;
  const auto fringes = gen_fringe_patterns(f);
  const auto gray = gen_gray_code_patterns(g);
  const auto t0 = std::chrono::steady_clock::now();
  const auto maps = analyze_phase(fringes, 18, gray.bits, gray.white, gray.black, &*gray.complementary, 0.02 * 65535);
  const double secs = seconds_since(t0);
  double ss = 0;
  std::size_t n = 0;
  for (int y = 0; y < 960; ++y)
    for (int x = 0; x < 960; ++x) {
      if (!maps.mask.at(x, y)) continue;
      const double e = maps.unwrapped.at(x, y) - 2 * M_PI * x / 40;
      ss += e * e;
      ++n;
    }
  const double rms = n ? std::sqrt(ss / n) : INFINITY;
  const bool pass = worst_cont < 1e-9 && rms < 2e-4 && n == 960u * 960u && secs < 5.0;
  return {pass, fmt("continuous max %.2e rad, quantized RMS %.2e rad over %zu px, 960x960 in %.2f s", worst_cont, rms,
                    n, secs)};
}

struct RenderedRun {
  fs::path out;
  PipelineOutcome calib;
  double calib_seconds = 0;
  bool ran = false;
};

RenderedRun& rendered_run() {
  static RenderedRun run;
  if (run.ran) return run;
  run.ran = true;
  PipelineConfig cfg = load_pipeline_config(kData / "sphere50.json");
  run.out = fs::temp_directory_path() / "vfpp_acceptance";
  fs::remove_all(run.out);
  cfg.output_dir = run.out;
  const auto t0 = std::chrono::steady_clock::now();
  run.calib = run_pipeline(cfg, parse_stages("patterns,board,capture,calibrate"));
  run.calib_seconds = seconds_since(t0);
  return run;
}

Outcome virtual_calibration() {
  // Noise-free synthetic correspondences.
  const Scene rig = default_rig(480);
  const CalibBoardSpec spec;
  const auto pts = board_object_points(spec);
  PoseProtocol pp;
  const auto boards = generate_board_poses(pp, spec);
  const auto mc = compose_projection(rig.camera.intrinsics, RigidPose::identity());
  const auto mp = compose_projection(rig.projector.intrinsics, rig.projector.pose, DeviceRole::Projector);
  PoseObservations cam, proj;
  for (const auto& b : boards) {
    std::vector<Vec2> c, p;
    for (const auto& x : pts) {
      c.push_back(project_point(mc, b.apply(x)));
      p.push_back(project_point(mp, b.apply(x)));
    }
    cam.push_back(c);
    proj.push_back(p);
  }
  const auto syn = stereo_calibrate(cam, proj, pts, rig.camera.intrinsics, rig.projector.intrinsics);
  auto rel = [](const Intrinsics& a, const Intrinsics& b) {
    return std::max({std::abs(a.fx / b.fx - 1), std::abs(a.fy / b.fy - 1), std::abs(a.ox / b.ox - 1),
                     std::abs(a.oy / b.oy - 1)});
  };
  const double k_err = std::max(rel(syn.cam, rig.camera.intrinsics), rel(syn.proj, rig.projector.intrinsics));
  const bool syn_ok = syn.stereo_reproj_rms < 1e-6 && syn.proj_reproj_rms < 1e-6 && k_err < 1e-3;

  // Rendered 18-pose protocol at 480 x 480.
  auto& run = rendered_run();
  if (run.calib.exit_code != 0)
    return {false, fmt("rendered protocol failed (exit %d): %s", run.calib.exit_code, run.calib.message.c_str())};
  const auto c = load_calibration(run.out / "calibrate" / "calibration.json");
  const bool pass = syn_ok && c.stereo_reproj_rms < 0.5 && c.proj_reproj_rms < 0.5 && run.calib_seconds < 600;
  return {pass, fmt("rendered: stereo RMS %.4f px, projector RMS %.4f px, %zu/%d poses, %.1f s at 480x480; "
                    "synthetic: RMS %.1e/%.1e px, intrinsics within %.1e",
                    c.stereo_reproj_rms, c.proj_reproj_rms, c.accepted_poses.size(), 18, run.calib_seconds,
                    syn.stereo_reproj_rms, syn.proj_reproj_rms, k_err)};
}

Outcome sphere_reconstruction() {
  auto& run = rendered_run();
  if (run.calib.exit_code != 0) return {false, "calibration stages did not complete"};
  PipelineConfig cfg = load_pipeline_config(kData / "sphere50.json");
  cfg.output_dir = run.out;
  const auto o = run_pipeline(cfg, parse_stages("reconstruct,validate"));
  if (o.exit_code != 0 && o.exit_code != 4) return {false, fmt("pipeline exit %d: %s", o.exit_code, o.message.c_str())};
  const auto j = read_json_file(run.out / "validate" / "sphere_fit.json");
  const double r = j["radius_mm"], err = j["radial_error_mm"], relerr = j["relative_error"];
  const double frac = j["inlier_fraction"];
  const std::size_t inl = j["inliers"], tot = j["total"];
  const bool pass = err <= 1.0 && relerr <= 0.02 && frac >= 0.99;
  return {pass, fmt("R_est %.4f mm, error %.4f mm (%.3f%%), inliers %zu/%zu (%.2f%%)", r, err, 100 * relerr, inl, tot,
                    100 * frac)};
}

Outcome twin_extent() {
  const auto e = projected_extent_at_distance(published_projector(), published_extrinsics(), 912, 1140, 1000);
  const bool pass = std::abs(e.height - 626.3) <= 1.0 && std::abs(e.width - 501.1) <= 1.0;
  return {pass, fmt("z=1000 mm: height %.3f mm (target 626.3), width %.3f mm (target 501.1)", e.height, e.width)};
}

Outcome real_system_extent() {
  const auto pm = projector_model_from_json(read_json_file(kData / "real_system_calib.json"));
  const auto e = projected_extent_at_distance(pm.k, pm.mext, pm.k.width, pm.k.height, 400);
  const double dw = (e.width - 204.20) / 204.20, dh = (e.height - 326.56) / 326.56;
  const bool pass = std::abs(e.width - 202.7) <= 0.5 && std::abs(e.height - 323.3) <= 0.5;
  return {pass, fmt("z=400 mm: (%.3f, %.3f) mm vs (202.7, 323.3); deviation from measured (204.20, 326.56): "
                    "%.2f%%, %.2f%% (reported)",
                    e.width, e.height, 100 * dw, 100 * dh)};
}

Outcome linearity() {
  const std::vector<double> zs{400, 500, 600, 700, 800, 900, 1000};
  const auto s = extent_linearity_sweep(published_projector(), published_extrinsics(), 912, 1140, zs);
  const double r2_dev = std::max(std::abs(1 - s.width_fit.r2), std::abs(1 - s.height_fit.r2));

  // Rendered footprint: projector and camera share a center, plane fronto-parallel.
  double worst_px = 0;
  for (double z : {400.0, 700.0}) {
    Scene sc;
    sc.camera.intrinsics = Intrinsics{600, 600, 239.5, 239.5, 480, 480};
    sc.projector.intrinsics = published_projector();
    sc.projector.pose = RigidPose::identity();
    PlaneGeom plane;
    plane.width = plane.height = 2 * z;
    plane.placement.t = Vec3(-z, -z, z);
    sc.objects.push_back({"plane", plane, Material{}});
    const GrayImage16 white(912, 1140, 65535);
    const auto img = render_frame(sc, &white);
    const auto ext = projected_extent_at_distance(sc.projector.intrinsics, RigidPose::identity(), 912, 1140, z);
    int lit_w = 0, lit_h = 0;
    for (int x = 0; x < 480; ++x) lit_w += img.at(x, 240) > 0;
    for (int y = 0; y < 480; ++y) lit_h += img.at(240, y) > 0;
    const double want_w = ext.width * 600 / z, want_h = ext.height * 600 / z;
    worst_px = std::max({worst_px, std::abs(lit_w - want_w), std::abs(lit_h - want_h)});
  }
  const bool pass = r2_dev < 1e-12 && worst_px <= 1.0;
  return {pass, fmt("|1-R^2| %.1e (width MAE %.1e mm), rendered footprint within %.3f px", r2_dev, s.width_fit.mae,
                    worst_px)};
}

Outcome msac_robustness() {
  double worst = 0, worst_frac = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed + 77);
    std::normal_distribution<double> g(0, 1);
    std::uniform_real_distribution<double> u(-1, 1);
    PointCloud pc;
    for (int i = 0; i < 9000; ++i) {
      const Vec3 d = Vec3(g(rng), g(rng), g(rng)).normalized();
      pc.points.push_back(Vec3(0, 0, 500) + (50 + 0.1 * g(rng)) * d);
    }
    for (int i = 0; i < 1000; ++i) pc.points.push_back(Vec3(0, 0, 500) + 80 * Vec3(u(rng), u(rng), u(rng)));
    const auto fit = fit_sphere_msac(pc, 0.5, 2000, seed);
    worst = std::max(worst, std::abs(fit.radius - 50));
    worst_frac = std::max(worst_frac, std::abs(fit.inlier_fraction() - 0.9));
  }
  return {worst <= 0.2, fmt("20 seeds, sigma 0.1 mm, 10%% outliers: max |R-50| %.4f mm, inlier fraction within %.2f%% "
                            "of 90%%",
                            worst, 100 * worst_frac)};
}

Outcome icp_recovery() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0, 1);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> target;
  for (int i = 0; i < 4000; ++i) {
    const Vec3 d = Vec3(g(rng), g(rng), g(rng)).normalized();
    const double r = 50 + 8 * std::sin(3 * d.x()) + 5 * d.y() * d.z();
    target.push_back(Vec3(1.6 * r * d.x(), r * d.y(), 0.7 * r * d.z()));
  }
  double worst_deg = 0, worst_mm = 0;
  for (int trial = 0; trial < 20; ++trial) {
    RigidPose truth;
    const Vec3 axis = Vec3(u(rng), u(rng), u(rng)).normalized();
    truth.R = rotation_from_axis_angle(axis * (10.0 * std::abs(u(rng))) * M_PI / 180);
    truth.t = Vec3(u(rng), u(rng), u(rng)).normalized() * (20.0 * std::abs(u(rng)));
    PointCloud src;
    const RigidPose inv = truth.inverse();
    for (const auto& p : target) src.points.push_back(inv.apply(p));
    const auto res = icp_register(src, target, 200, 1e-12);
    worst_deg = std::max(worst_deg, rotation_angle_between(res.pose.R, truth.R) * 180 / M_PI);
    worst_mm = std::max(worst_mm, (res.pose.t - truth.t).norm());
  }
  return {worst_deg <= 0.1 && worst_mm <= 0.1,
          fmt("20 transforms up to 10 deg / 20 mm: max error %.2e deg, %.2e mm", worst_deg, worst_mm)};
}

Outcome c2m_oracle() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-50, 50), s(-8, 8), w(0, 1);
  TriangleMesh mesh;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 c(u(rng), u(rng), u(rng));
    for (int k = 0; k < 3; ++k) mesh.vertices.push_back(c + Vec3(s(rng), s(rng), s(rng)));
    mesh.faces.push_back({3 * i, 3 * i + 1, 3 * i + 2});
  }
  PointCloud pc;
  for (int i = 0; i < 1000; ++i) pc.points.emplace_back(u(rng) * 1.3, u(rng) * 1.3, u(rng) * 1.3);
  const auto rep = cloud_to_mesh(pc, mesh);
  const auto brute = cloud_to_mesh_brute_force(pc, mesh);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < brute.size(); ++i) mismatches += rep.distances[i] != brute[i];
  PointCloud on;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    double a = w(rng), b = w(rng);
    if (a + b > 1) {
      a = 1 - a;
      b = 1 - b;
    }
    const auto& fc = mesh.faces[f];
    on.points.push_back((1 - a - b) * mesh.vertices[fc[0]] + a * mesh.vertices[fc[1]] + b * mesh.vertices[fc[2]]);
  }
  const double on_max = cloud_to_mesh(on, mesh).max;
  return {mismatches == 0 && on_max < 1e-9,
          fmt("10^3 points x 10^3 triangles: %zu mismatches vs brute force; on-mesh max %.1e mm", mismatches, on_max)};
}

Outcome adverse_conditions() {
  const int size = 240;
  auto tier_scene = [&](int tier, const Material& mat) {
    Scene sc = default_rig(size);
    sc.ambients.clear();
    if (tier >= 1) sc.ambients.push_back(AmbientLight{AmbientKind::UniformSky, 0.02, {}, 0, 0, 1});
    for (int p = 0; p < tier - 1; ++p) {
      AmbientLight panel;
      panel.kind = AmbientKind::RectPanel;
      panel.intensity = 0.3;
      panel.width = panel.height = 500;
      panel.placement = look_at_pose(Vec3(p == 0 ? -400 : 400, 0, 200), Vec3(0, 0, 500)).inverse();
      sc.ambients.push_back(panel);
    }
    sc.objects.push_back({"sphere", SphereGeom{Vec3(0, 0, 500), 50}, mat});
    return sc;
  };
  const auto fringes = gen_fringe_patterns(FringeSetSpec{});
  const char* names[] = {"None", "Baseline", "One ambient", "Two ambient"};
  std::vector<RasterF64> avg(4), mod(4);
  std::vector<int> obj;
  for (int tier = 0; tier < 4; ++tier) {
    const Scene sc = tier_scene(tier, Material{});
    const FrameTransport ft(sc);
    std::vector<GrayImage16> frames;
    for (const auto& p : fringes) frames.push_back(ft.render(&p));
    const auto w = compute_wrapped_phase(frames, 18);
    avg[tier] = w.avg;
    mod[tier] = w.mod;
    if (tier == 0) obj = ft.pixel_object();
  }
  // Common pixel set: sphere pixels lit by the projector.
  std::vector<double> ratio(4, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < obj.size(); ++i) {
    if (obj[i] != 0 || avg[0].data[i] <= 0) continue;
    ++count;
    for (int t = 0; t < 4; ++t) ratio[t] += mod[t].data[i] / avg[t].data[i];
  }
  for (auto& r : ratio) r /= std::max<std::size_t>(count, 1);
  const bool order = ratio[0] > ratio[1] && ratio[1] > ratio[2] && ratio[2] > ratio[3];

  const GrayImage16 white(912, 1140, 65535);
  auto saturated = [&](const Material& m) {
    const auto img = render_frame(tier_scene(1, m), &white);
    std::size_t n = 0;
    for (auto v : img.data) n += v == 65535;
    return n;
  };
  Material metal;
  metal.metallic = 1.0;
  metal.roughness = 0.2;
  const std::size_t sat_base = saturated(Material{}), sat_metal = saturated(metal);
  std::string d = "mean I''/I' over " + std::to_string(count) + " px:";
  for (int t = 0; t < 4; ++t) d += fmt(" %s %.4f%s", names[t], ratio[t], t < 3 ? " >" : ";");
  d += fmt(" saturated px baseline %zu vs metallic %zu", sat_base, sat_metal);
  return {order && sat_metal > sat_base && count > 0, d};
}

Outcome board_circles() {
  const CalibBoardSpec spec;
  const auto board = gen_calibration_board(spec);
  const double pitch = board.report.d_centers_sim_m * 1000.0;
  const Vec3 center((spec.cols - 1) * pitch / 4.0, (spec.rows - 1) * pitch / 2.0, 0.0);
  RigidPose pose;
  pose.t = Vec3(0, 0, 500) - center;
  Scene sc = default_rig(480);
  // Coaxial projector so the whole board is lit by the white frame.
  sc.projector.pose = RigidPose::identity();
  sc.objects.push_back(make_board_object(spec, board, pose));
  const GrayImage16 white(912, 1140, 65535);
  const auto img = render_frame(sc, &white);
  // Threshold halfway between the board white level and the ink level.
  const auto c0 = compose_projection(sc.camera.intrinsics, sc.camera.pose);
  const Vec2 mid = project_point(c0, pose.apply(center + Vec3(pitch / 4, 0, 0)));
  const double bright = img.at(static_cast<int>(std::lround(mid.x())), static_cast<int>(std::lround(mid.y())));
  const Vec2 ink_px = project_point(c0, pose.apply(Vec3::Zero()));
  const double ink = img.at(static_cast<int>(std::lround(ink_px.x())), static_cast<int>(std::lround(ink_px.y())));
  const double thr = 0.5 * (bright + ink);
  const int w = img.width, h = img.height;
  std::vector<int> label(img.size(), 0);
  std::vector<double> areas;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (label[i] || img.data[i] >= thr) continue;
      // Partial-coverage area: each pixel contributes its darkness fraction.
      double area = 0;
      std::vector<std::size_t> stack{i};
      label[i] = 1;
      bool touches_edge = false;
      while (!stack.empty()) {
        const std::size_t k = stack.back();
        stack.pop_back();
        const int kx = static_cast<int>(k % w), ky = static_cast<int>(k / w);
        touches_edge = touches_edge || kx == 0 || ky == 0 || kx == w - 1 || ky == h - 1;
        area += std::clamp((bright - img.data[k]) / (bright - ink), 0.0, 1.0);
        for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int nx = kx + dx, ny = ky + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t q = static_cast<std::size_t>(ny) * w + nx;
          if (label[q] || img.data[q] >= bright - 0.02 * (bright - ink)) continue;
          label[q] = 1;
          stack.push_back(q);
        }
      }
      if (!touches_edge) areas.push_back(area);
    }
  const double d_sim_mm = board.report.d_circle_sim_m * 1000.0;
  const double fx = sc.camera.intrinsics.fx;
  double worst = 0, mean = 0;
  for (double a : areas) {
    const double d_mm = 2 * std::sqrt(a / M_PI) * 500.0 / fx;
    worst = std::max(worst, std::abs(d_mm / d_sim_mm - 1));
    mean += d_mm;
  }
  mean /= std::max<std::size_t>(areas.size(), 1);
  const bool pass = areas.size() == static_cast<std::size_t>(spec.rows * spec.cols) && worst <= 0.07;
  return {pass, fmt("%zu circles, mean diameter %.3f mm vs D_circle_sim %.3f mm, worst deviation %.2f%%", areas.size(),
                    mean, d_sim_mm, 100 * worst)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"phase round trip", phase_round_trip},
      {"virtual calibration", virtual_calibration},
      {"sphere reconstruction", sphere_reconstruction},
      {"digital-twin extent", twin_extent},
      {"real-system extent", real_system_extent},
      {"extent linearity", linearity},
      {"MSAC robustness", msac_robustness},
      {"ICP recovery", icp_recovery},
      {"C2M oracle", c2m_oracle},
      {"adverse lighting", adverse_conditions},
      {"board circle diameter", board_circles},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
