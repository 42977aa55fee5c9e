#include <doctest.h>

#include <Eigen/SVD>
#include <cmath>

#include "error.hpp"
#include "recon.hpp"
#include "render.hpp"
#include "test_util.hpp"

using namespace vfpp;
using testutil::uniform;

namespace {

CalibrationResult rig_calibration(int size = 480) {
  const Scene rig = default_rig(size);
  CalibrationResult c;
  c.cam = rig.camera.intrinsics;
  c.proj = rig.projector.intrinsics;
  c.cam_to_proj = rig.projector.pose;
  return c;
}

// Ideal vertical-fringe phase map of a plane z = z0 seen by the rig.
PhaseMaps plane_phase(const CalibrationResult& c, double z0, double period) {
  const int w = c.cam.width, h = c.cam.height;
  PhaseMaps m;
  m.unwrapped = RasterF64(w, h);
  m.wrapped = RasterF64(w, h);
  m.mask = Mask8(w, h);
  m.order.assign(static_cast<std::size_t>(w) * h, 0);
  const auto mp = c.projector_matrix();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Ray r = pixel_ray(c.cam, RigidPose::identity(), x, y);
      const Vec3 p = r.at(z0 / r.direction.z());
      const double up = project_point(mp, p).x();
      if (up < 0 || up > c.proj.width - 1) continue;
      m.unwrapped.at(x, y) = 2 * M_PI * up / period;
      m.mask.at(x, y) = 1;
    }
  return m;
}

}  // namespace

TEST_SUITE("recon") {
  TEST_CASE("identity geometry example") {
    ProjectionMatrix mc, mp;
    mc.m.leftCols<3>() = Mat3::Identity();
    mp.m.leftCols<3>() = Mat3::Identity();
    mp.m(0, 3) = -1;
    const Vec3 x = triangulate_point(mc, mp, 0, 0, -1);
    CHECK((x - Vec3(0, 0, 1)).norm() < 1e-12);
  }

  TEST_CASE("random points round trip and reproject") {
    for (int trial = 0; trial < 10; ++trial) {
      const Intrinsics kc = testutil::random_intrinsics(), kp = testutil::random_intrinsics();
      RigidPose pp;
      pp.R = testutil::random_rotation(0.3);
      pp.t = Vec3(uniform(-200, 200), uniform(-150, 150), uniform(-20, 20));
      const auto mc = compose_projection(kc, RigidPose::identity());
      const auto mp = compose_projection(kp, pp, DeviceRole::Projector);
      double worst = 0;
      for (int i = 0; i < 100; ++i) {
        const Vec3 x(uniform(-100, 100), uniform(-100, 100), uniform(300, 900));
        const Vec2 c = project_point(mc, x), p = project_point(mp, x);
        try {
          const Vec3 got = triangulate_point(mc, mp, c.x(), c.y(), p.x());
          worst = std::max(worst, (got - x).norm());
          const Vec2 c2 = project_point(mc, got);
          CHECK((c2 - c).norm() < 1e-8);
          CHECK(std::abs(project_point(mp, got).x() - p.x()) < 1e-8);
          // Independent least-squares solve over all four rows.
          Eigen::Matrix<double, 4, 3> a;
          Eigen::Vector4d b;
          const Mat34& C = mc.m;
          const Mat34& P = mp.m;
          a.row(0) = C.block<1, 3>(0, 0) - c.x() * C.block<1, 3>(2, 0);
          a.row(1) = C.block<1, 3>(1, 0) - c.y() * C.block<1, 3>(2, 0);
          a.row(2) = P.block<1, 3>(0, 0) - p.x() * P.block<1, 3>(2, 0);
          a.row(3) = P.block<1, 3>(1, 0) - p.y() * P.block<1, 3>(2, 0);
          b << c.x() * C(2, 3) - C(0, 3), c.y() * C(2, 3) - C(1, 3), p.x() * P(2, 3) - P(0, 3),
              p.y() * P(2, 3) - P(1, 3);
          const Vec3 ls = a.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
          CHECK((ls - got).norm() < 1e-9);
        } catch (const Error& e) {
          CHECK(e.code() == ErrorCode::SingularGeometry);
        }
      }
      CHECK(worst < 1e-6);
    }
  }

  TEST_CASE("zero baseline is singular") {
    const auto k = testutil::random_intrinsics();
    const auto m = compose_projection(k, RigidPose::identity());
    try {
      triangulate_point(m, m, 100, 120, 100);
      FAIL("expected SingularGeometry");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::SingularGeometry);
    }
  }

  TEST_CASE("plane phase map reconstructs a flat cloud") {
    const auto calib = rig_calibration(96);
    const auto maps = plane_phase(calib, 500, 38);
    ReconstructionStats st;
    const auto cloud = reconstruct_cloud(maps, calib, 38, 1.0, &st);
    REQUIRE(cloud.size() > 1000);
    CHECK(st.valid_pixels == cloud.size());
    CHECK(cloud.has_pixels());
    Vec3 mean = Vec3::Zero();
    for (const auto& p : cloud.points) mean += p;
    mean /= cloud.size();
    Eigen::MatrixXd a(cloud.size(), 3);
    for (std::size_t i = 0; i < cloud.size(); ++i) a.row(i) = (cloud.points[i] - mean).transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    CHECK(svd.singularValues()[2] / std::sqrt(cloud.size()) < 0.05);
    for (const auto& p : cloud.points) CHECK(std::abs(p.z() - 500) < 1e-6);
    // Reprojection closure to the source pixel.
    const auto mc = calib.camera_matrix();
    for (std::size_t i = 0; i < cloud.size(); i += 97)
      CHECK((project_point(mc, cloud.points[i]) - cloud.pixels[i]).norm() < 1e-8);
  }

  TEST_CASE("scale multiplies every coordinate exactly") {
    const auto calib = rig_calibration(48);
    const auto maps = plane_phase(calib, 450, 38);
    const auto a = reconstruct_cloud(maps, calib, 38, 1.0);
    const auto b = reconstruct_cloud(maps, calib, 38, 2.0);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK((b.points[i] - 2.0 * a.points[i]).norm() == 0.0);
  }

  TEST_CASE("empty mask fails") {
    const auto calib = rig_calibration(16);
    PhaseMaps m;
    m.unwrapped = m.wrapped = RasterF64(16, 16);
    m.mask = Mask8(16, 16, 0);
    try {
      reconstruct_cloud(m, calib, 38);
      FAIL("expected EmptyMask");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyMask);
    }
  }
}
