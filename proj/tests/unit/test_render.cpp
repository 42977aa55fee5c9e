#include <doctest.h>

#include <cmath>
#include <memory>

#include "error.hpp"
#include "image.hpp"
#include "io_util.hpp"
#include "mesh.hpp"
#include "parallel.hpp"
#include "patterns.hpp"
#include "phase.hpp"
#include "render.hpp"
#include "test_util.hpp"

using namespace vfpp;
using testutil::uniform;

namespace {

SceneObject plane_at(double z, double size) {
  PlaneGeom p;
  p.placement.t = Vec3(-size / 2, -size / 2, z);
  p.width = p.height = size;
  return {"plane", p, Material{}};
}

// Camera and projector share one small pinhole at the origin.
Scene coincident_rig(int size) {
  Scene sc;
  const double c = (size - 1) / 2.0;
  sc.camera.intrinsics = Intrinsics{2.0 * size, 2.0 * size, c, c, size, size};
  sc.projector.intrinsics = sc.camera.intrinsics;
  sc.projector.intensity = 0.8;
  sc.objects.push_back(plane_at(500, 400));
  return sc;
}

Scene small_default_rig(int size) {
  Scene sc = default_rig(size);
  sc.objects.push_back(plane_at(500, 600));
  return sc;
}

}  // namespace

TEST_SUITE("render") {
  TEST_CASE("axis ray hits the sphere front pole") {
    Scene sc;
    sc.objects.push_back({"sphere", SphereGeom{Vec3(0, 0, 500), 50}, Material{}});
    const auto hit = intersect_scene(Ray{Vec3::Zero(), Vec3::UnitZ()}, sc);
    REQUIRE(hit.has_value());
    CHECK((hit->point - Vec3(0, 0, 450)).norm() < 1e-9);
    CHECK((hit->normal - Vec3(0, 0, -1)).norm() < 1e-12);
    CHECK(hit->t == doctest::Approx(450));
    CHECK(hit->object == 0);
  }

  TEST_CASE("ray parallel to a plane misses, rays behind the origin are ignored") {
    Scene sc;
    sc.objects.push_back(plane_at(500, 400));
    CHECK_FALSE(intersect_scene(Ray{Vec3(0, 0, 0), Vec3::UnitX()}, sc).has_value());
    CHECK_FALSE(intersect_scene(Ray{Vec3(0, 0, 0), -Vec3::UnitZ()}, sc).has_value());
    const auto hit = intersect_scene(Ray{Vec3(0, 0, 0), Vec3::UnitZ()}, sc);
    REQUIRE(hit.has_value());
    CHECK(hit->normal.z() == doctest::Approx(-1));
    CHECK(hit->uv.x() == doctest::Approx(200));
  }

  TEST_CASE("mesh BVH nearest hits equal an exhaustive triangle scan") {
    TriangleMesh mesh = make_uv_sphere(Vec3(5, -3, 400), 60, 20, 40);
    // A few loose triangles in front of and behind the sphere.
    for (int i = 0; i < 50; ++i) {
      const Vec3 c(uniform(-80, 80), uniform(-80, 80), uniform(300, 500));
      const int base = static_cast<int>(mesh.vertices.size());
      for (int k = 0; k < 3; ++k) mesh.vertices.push_back(c + Vec3(uniform(-20, 20), uniform(-20, 20), uniform(-20, 20)));
      mesh.faces.push_back({base, base + 1, base + 2});
    }
    const MeshBvh bvh(mesh);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
      const Vec3 o(uniform(-50, 50), uniform(-50, 50), uniform(0, 100));
      const Vec3 d = (Vec3(uniform(-100, 100), uniform(-100, 100), 400) - o).normalized();
      std::optional<TriangleHit> best;
      for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& fc = mesh.faces[f];
        auto h = intersect_triangle(o, d, mesh.vertices[fc[0]], mesh.vertices[fc[1]], mesh.vertices[fc[2]], 1e-6);
        if (h && (!best || h->t < best->t)) {
          best = h;
          best->face = static_cast<int>(f);
        }
      }
      const auto got = bvh.intersect(o, d, 1e-6, std::numeric_limits<double>::infinity());
      REQUIRE(got.has_value() == best.has_value());
      if (best) {
        ++hits;
        CHECK(got->t == best->t);
        CHECK(got->face == best->face);
        CHECK(bvh.occluded(o, d, 1e-6, best->t + 1e-6));
        CHECK_FALSE(bvh.occluded(o, d, 1e-6, best->t * (1 - 1e-9)));
      }
    }
    CHECK(hits > 1000);
  }

  TEST_CASE("central pixel of a fronto-parallel plane matches hand shading") {
    Scene sc = coincident_rig(61);
    const GrayImage16 white(61, 61, 65535);
    const auto img = render_frame(sc, &white);
    const double e = 2.0 / std::pow(0.95, 4) - 2.0;
    const double lobe = (e + 8.0) / (8.0 * M_PI);
    const double expect = std::round(65535.0 * 0.8 * (0.8 + 0.15 * lobe));
    CHECK(img.at(30, 30) == static_cast<int>(expect));
    // Off axis the cosine and lobe drop, so the center is the brightest pixel.
    CHECK(img.at(0, 0) < img.at(30, 30));
    CHECK(specular_exponent(0.95) == doctest::Approx(e).epsilon(1e-15));
    CHECK(specular_exponent(1.0) == 0.0);
  }

  TEST_CASE("shade_brdf limits") {
    const Vec3 n(0, 0, 1);
    Material m;
    CHECK(shade_brdf(m, 0.8, n, Vec3(0, 0, -1), n) == 0.0);
    m.metallic = 0;
    m.specular = 0;
    const Vec3 l = Vec3(0, 0.6, 0.8);
    CHECK(shade_brdf(m, 0.5, n, l, n) == doctest::Approx(0.5 * 0.8).epsilon(1e-15));
    m.metallic = 1;
    m.roughness = 1;  // flat lobe 1 / pi
    CHECK(shade_brdf(m, 0.5, n, n, n) == doctest::Approx(0.5 / M_PI).epsilon(1e-12));
  }

  TEST_CASE("black projector texture equals the ambient-only rendering") {
    Scene sc = small_default_rig(64);
    sc.ambients[0].intensity = 0.3;
    const GrayImage16 black(912, 1140, 0);
    const auto a = render_frame(sc, &black);
    const auto b = render_frame(sc, nullptr);
    CHECK(a.data == b.data);
    // The ambient level itself: sky * albedo * (1 - ao / 2).
    CHECK(b.at(32, 32) == static_cast<int>(std::lround(65535.0 * 0.3 * 0.8 * (1 - 0.5 * 0.95))));
  }

  TEST_CASE("pattern size must match the projector") {
    Scene sc = small_default_rig(16);
    const GrayImage16 wrong(10, 10);
    try {
      render_frame(sc, &wrong);
      FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DimensionMismatch);
    }
  }

  TEST_CASE("fringe phase on a plane follows the projective mapping") {
    Scene sc = small_default_rig(120);
    sc.ambients.clear();
    FringeSetSpec f;  // 18 steps, T = 38, 912 x 1140
    const auto patterns = gen_fringe_patterns(f);
    const FrameTransport transport(sc);
    std::vector<GrayImage16> frames;
    for (const auto& p : patterns) frames.push_back(transport.render(&p));
    const auto w = compute_wrapped_phase(frames, f.n_steps);
    const auto mp = compose_projection(sc.projector.intrinsics, sc.projector.pose, DeviceRole::Projector);
    int checked = 0;
    double worst = 0;
    for (int y = 0; y < 120; ++y)
      for (int x = 0; x < 120; ++x) {
        const Ray r = pixel_ray(sc.camera.intrinsics, sc.camera.pose, x, y);
        const Vec3 p = r.at(500.0 / r.direction.z());
        const Vec2 uv = project_point(mp, p);
        if (uv.x() < 1 || uv.x() > 910 || uv.y() < 1 || uv.y() > 1138) continue;
        if (w.mod.at(x, y) < 0.05 * 65535) continue;
        const double expect = 2 * M_PI * uv.x() / f.period_px;
        double e = std::remainder(w.wrapped.at(x, y) - expect, 2 * M_PI);
        worst = std::max(worst, std::abs(e));
        ++checked;
      }
    CHECK(checked > 120 * 120 / 2);
    CHECK(worst < 5e-3);
  }

  TEST_CASE("rendering is bit-identical across runs and thread counts") {
    Scene sc = default_rig(96);
    sc.objects.push_back({"sphere", SphereGeom{Vec3(0, 0, 500), 50}, Material{}});
    AmbientLight panel;
    panel.kind = AmbientKind::RectPanel;
    panel.intensity = 0.5;
    panel.placement = look_at_pose(Vec3(300, 0, 300), Vec3(0, 0, 500)).inverse();
    panel.width = panel.height = 200;
    sc.ambients.push_back(panel);
    const auto pat = gen_fringe_patterns(FringeSetSpec{})[3];
    set_thread_count(1);
    const auto a = render_frame(sc, &pat);
    set_thread_count(0);
    const auto b = render_frame(sc, &pat);
    const auto c = render_frame(sc, &pat);
    CHECK(image_hash(a) == image_hash(b));
    CHECK(a.data == c.data);
  }

  TEST_CASE("raising any light intensity never darkens a pixel") {
    Scene sc = default_rig(64);
    sc.objects.push_back({"sphere", SphereGeom{Vec3(0, 0, 500), 50}, Material{}});
    sc.objects.push_back(plane_at(600, 600));
    AmbientLight panel;
    panel.kind = AmbientKind::RectPanel;
    panel.intensity = 0.2;
    panel.placement = look_at_pose(Vec3(-300, 0, 300), Vec3(0, 0, 500)).inverse();
    sc.ambients.push_back(panel);
    const auto pat = gen_fringe_patterns(FringeSetSpec{})[0];
    const auto base = FrameTransport(sc).radiance(&pat);
    for (int which = 0; which < 3; ++which) {
      Scene s2 = sc;
      if (which == 0) s2.projector.intensity *= 1.5;
      if (which == 1) s2.ambients[0].intensity *= 3;
      if (which == 2) s2.ambients[1].intensity *= 2;
      const auto brighter = FrameTransport(s2).radiance(&pat);
      bool any_up = false;
      for (std::size_t i = 0; i < base.data.size(); ++i) {
        CHECK(brighter.data[i] >= base.data[i]);
        any_up = any_up || brighter.data[i] > base.data[i];
      }
      CHECK(any_up);
    }
  }

  TEST_CASE("occluded points receive no projector light") {
    Scene sc = default_rig(80);
    sc.ambients.clear();
    // Sphere on the projector's side of the plane, hidden from nothing it shadows.
    const Vec3 proj_c = sc.projector.pose.center();
    const Vec3 target(0, 0, 600);
    const Vec3 occ_center = proj_c + 0.5 * (target - proj_c);
    const double occ_r = 20;
    sc.objects.push_back(plane_at(600, 800));
    sc.objects.push_back({"occluder", SphereGeom{occ_center, occ_r}, Material{}});
    const GrayImage16 white(912, 1140, 65535);
    const auto rad = FrameTransport(sc).radiance(&white);
    int shadowed = 0, lit = 0;
    for (int y = 0; y < 80; ++y)
      for (int x = 0; x < 80; ++x) {
        const Ray r = pixel_ray(sc.camera.intrinsics, sc.camera.pose, x, y);
        const auto hit = intersect_scene(r, sc);
        if (!hit || hit->object != 0) continue;
        // Independent segment-sphere test.
        const Vec3 d = proj_c - hit->point;
        const double len = d.norm();
        const Vec3 dir = d / len;
        const Vec3 oc = hit->point - occ_center;
        const double b = oc.dot(dir), c = oc.squaredNorm() - occ_r * occ_r;
        const double disc = b * b - c;
        bool blocked = false;
        if (disc > 0) {
          const double t0 = -b - std::sqrt(disc), t1 = -b + std::sqrt(disc);
          blocked = (t0 > 1e-3 && t0 < len) || (t1 > 1e-3 && t1 < len);
        }
        if (blocked) {
          CHECK(rad.at(x, y) == 0.0);
          ++shadowed;
        } else {
          ++lit;
        }
      }
    CHECK(shadowed > 10);
    CHECK(lit > 100);
  }

  TEST_CASE("pose protocol bounds and determinism") {
    PoseProtocol pp;
    const CalibBoardSpec spec;
    const auto poses = generate_board_poses(pp, spec);
    REQUIRE(poses.size() == 18);
    const auto report = board_report(spec);
    const double pitch = report.d_centers_sim_m * 1000.0;
    const Vec3 center((spec.cols - 1) * pitch / 4.0, (spec.rows - 1) * pitch / 2.0, 0.0);
    for (const auto& p : poses) {
      CHECK(p.valid());
      const Vec3 c = p.apply(center);
      CHECK(std::abs(c.x()) <= 15.0 + 1e-9);
      CHECK(std::abs(c.y()) <= 15.0 + 1e-9);
      CHECK(c.z() == doctest::Approx(500));
      const double angle = rotation_angle_between(Mat3::Identity(), p.R) * 180 / M_PI;
      CHECK(angle >= 5.0 - 1e-9);
      CHECK(angle <= 15.0 * std::sqrt(2.0) + 1e-9);
    }
    const auto again = generate_board_poses(pp, spec);
    CHECK((again[7].R - poses[7].R).norm() == 0.0);
    pp.seed = 9;
    CHECK((generate_board_poses(pp, spec)[0].t - poses[0].t).norm() > 0);
  }

  TEST_CASE("capture session writes one file per pose and pattern") {
    const auto dir = testutil::temp_dir("capture");
    Scene sc = default_rig(64);
    CalibBoardSpec spec;
    spec.px_per_mm = 2;
    const auto board = gen_calibration_board(spec);
    PoseProtocol pp;
    pp.count = 1;
    BoardPlacement placement;
    placement.spec = spec;
    placement.report = board.report;
    placement.poses = generate_board_poses(pp, spec);
    sc.objects.push_back(make_board_object(spec, board, placement.poses[0]));
    placement.object = 0;
    const auto pats = standard_pattern_set(FringeSetSpec{});
    const std::vector<PatternEntry> one(pats.begin(), pats.begin() + 1);
    const auto rec = run_capture_session(sc, one, &placement, dir);
    REQUIRE(rec.size() == 1);
    CHECK(std::filesystem::exists(dir / rec[0].file));
    const auto manifest = read_capture_manifest(dir / "manifest.jsonl");
    REQUIRE(manifest.size() == 1);
    CHECK(manifest[0].pattern == one[0].id);
    CHECK(manifest[0].hash == rec[0].hash);
    // A rerun is byte-identical.
    const auto first = read_text_file(dir / rec[0].file);
    run_capture_session(sc, one, &placement, dir);
    CHECK(read_text_file(dir / rec[0].file) == first);
    CHECK(board_in_view(sc, spec, placement.poses[0]));
  }
}
