#include <doctest.h>

#include <fstream>

#include "error.hpp"
#include "image.hpp"
#include "io_util.hpp"
#include "mesh.hpp"
#include "ply.hpp"
#include "scene.hpp"
#include "test_util.hpp"

using namespace vfpp;

namespace {

GrayImage16 ramp(int w, int h) {
  GrayImage16 img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint16_t>((x * 997 + y * 7919) % 65536);
  return img;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("16-bit PNG and PGM round trips") {
    const auto dir = testutil::temp_dir("img");
    const auto img = ramp(37, 23);
    write_image(dir / "a.png", img);
    write_image(dir / "sub" / "b.pgm", img);
    CHECK(read_image(dir / "a.png").data == img.data);
    const auto pgm = read_image(dir / "sub" / "b.pgm");
    CHECK(pgm.width == 37);
    CHECK(pgm.data == img.data);
    write_image(dir / "c.png", img, true);
    const auto eight = read_image(dir / "c.png");
    for (std::size_t i = 0; i < img.size(); ++i) CHECK((eight.data[i] >> 8) == (img.data[i] >> 8));
    CHECK(format_for_path("x.PGM") == ImageFormat::Pgm);
    CHECK_THROWS_AS(format_for_path("x.jpg"), Error);
    CHECK_THROWS_AS(read_image(dir / "missing.png"), Error);
  }

  TEST_CASE("mask and raster round trips") {
    const auto dir = testutil::temp_dir("raster");
    Mask8 m(5, 4, 0);
    m.at(1, 2) = 1;
    m.at(4, 3) = 1;
    write_mask_pgm(dir / "m.pgm", m);
    const auto mb = read_mask_pgm(dir / "m.pgm");
    CHECK(mb.count() == 2);
    CHECK(mb.at(4, 3) != 0);
    RasterF64 r(3, 2);
    r.at(2, 1) = -1.25e-7;
    r.at(0, 0) = M_PI;
    write_raster(dir / "phi.f64", r, "unwrapped_phase", "rad");
    const auto rb = read_raster(dir / "phi.f64");
    CHECK(rb.data == r.data);
    const auto side = read_json_file(dir / "phi.f64.json");
    CHECK(side["field"] == "unwrapped_phase");
  }

  TEST_CASE("PLY clouds in both encodings") {
    const auto dir = testutil::temp_dir("ply");
    PointCloud pc;
    for (int i = 0; i < 100; ++i) {
      pc.points.emplace_back(i * 0.1, -i * 1e-9, 1e6 + i);
      pc.pixels.emplace_back(i, 2 * i);
    }
    for (auto enc : {PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian}) {
      write_ply(dir / "c.ply", pc, enc);
      const auto back = read_ply_cloud(dir / "c.ply");
      REQUIRE(back.size() == 100);
      CHECK(back.has_pixels());
      for (int i = 0; i < 100; ++i) {
        CHECK(back.points[i] == pc.points[i]);
        CHECK(back.pixels[i] == pc.pixels[i]);
      }
    }
  }

  TEST_CASE("PLY meshes, quads triangulated as fans") {
    const auto dir = testutil::temp_dir("plymesh");
    const auto m = make_uv_sphere(Vec3(1, 2, 3), 10, 6, 12);
    write_ply_mesh(dir / "m.ply", m);
    const auto back = read_ply_mesh(dir / "m.ply");
    CHECK(back.vertices == m.vertices);
    CHECK(back.faces == m.faces);
    std::ofstream(dir / "quad.ply") << "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\n"
                                       "property float z\nelement face 1\nproperty list uchar int vertex_indices\n"
                                       "end_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
    const auto q = read_ply_mesh(dir / "quad.ply");
    CHECK(q.faces.size() == 2);
    std::ofstream(dir / "bad.ply") << "not a ply\n";
    CHECK_THROWS_AS(read_ply_cloud(dir / "bad.ply"), Error);
  }

  TEST_CASE("mesh validation") {
    TriangleMesh m;
    m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    m.faces = {{0, 1, 2}};
    CHECK_NOTHROW(m.validate());
    CHECK(m.face_area(0) == doctest::Approx(0.5));
    m.faces = {{0, 1, 5}};
    CHECK_THROWS_AS(m.validate(), Error);
    m.vertices.push_back(Vec3(2, 0, 0));
    m.faces = {{0, 1, 3}};
    CHECK_THROWS_AS(m.validate(), Error);
  }

  TEST_CASE("closest point on triangle covers all regions") {
    const Vec3 a(0, 0, 0), b(4, 0, 0), c(0, 4, 0);
    CHECK((closest_point_on_triangle(Vec3(1, 1, 3), a, b, c) - Vec3(1, 1, 0)).norm() < 1e-15);
    CHECK((closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c) - a).norm() < 1e-15);
    CHECK((closest_point_on_triangle(Vec3(6, -1, 0), a, b, c) - b).norm() < 1e-15);
    CHECK((closest_point_on_triangle(Vec3(2, -3, 1), a, b, c) - Vec3(2, 0, 0)).norm() < 1e-15);
    CHECK((closest_point_on_triangle(Vec3(3, 3, 0), a, b, c) - Vec3(2, 2, 0)).norm() < 1e-12);
    CHECK((closest_point_on_triangle(Vec3(-2, 1, 0), a, b, c) - Vec3(0, 1, 0)).norm() < 1e-15);
  }

  TEST_CASE("scene JSON round trip and unit conversion") {
    Scene sc = default_rig(120);
    sc.objects.push_back({"ball", SphereGeom{Vec3(1, 2, 500), 50}, Material{0.5, 0.2, 0.1, 1.0, 0.0}});
    AmbientLight panel;
    panel.kind = AmbientKind::RectPanel;
    panel.intensity = 0.3;
    sc.ambients.push_back(panel);
    const auto j = scene_to_json(sc);
    const Scene back = scene_from_json(j);
    CHECK(back.camera.intrinsics.fx == sc.camera.intrinsics.fx);
    CHECK((back.projector.pose.t - sc.projector.pose.t).norm() < 1e-12);
    CHECK(back.ambients.size() == 2);
    CHECK(back.objects[0].material.metallic == 1.0);
    CHECK(scene_to_json(back) == j);

    nlohmann::json m = j;
    m["unit"] = "m";
    m["objects"][0]["sphere"]["radius"] = 0.05;
    m["objects"][0]["sphere"]["center"] = {0.001, 0.002, 0.5};
    const Scene meters = scene_from_json(m);
    const auto& s = std::get<SphereGeom>(meters.objects[0].geometry);
    CHECK(s.radius == doctest::Approx(50));
    CHECK(s.center.z() == doctest::Approx(500));

    nlohmann::json bad = j;
    bad["objects"] = nlohmann::json::array();
    CHECK_THROWS_AS(scene_from_json(bad).validate(), Error);
    bad = j;
    bad["objects"][0]["material"]["roughness"] = 1.5;
    CHECK_THROWS_AS(scene_from_json(bad), Error);
  }

  TEST_CASE("scene files in the data directory load") {
    const auto sc = load_scene(std::filesystem::path(VFPP_SOURCE_DIR) / "data" / "sphere50_scene.json");
    CHECK(sc.camera.intrinsics.width == 480);
    CHECK(sc.objects.size() == 1);
  }

  TEST_CASE("hashing and hex") {
    CHECK(hex64(0x1234) == "0000000000001234");
    CHECK(hash_string("abc") == hash_string("abc"));
    CHECK(hash_string("abc") != hash_string("abd"));
    const auto a = ramp(4, 4);
    auto b = a;
    CHECK(image_hash(a) == image_hash(b));
    b.at(3, 3) ^= 1;
    CHECK(image_hash(a) != image_hash(b));
    CHECK(resolve_path("/base", "rel/x").generic_string() == "/base/rel/x");
    CHECK(resolve_path("/base", "/abs").generic_string() == "/abs");
    CHECK(resolve_path("", "rel").generic_string() == "rel");
  }
}
