#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"
#include "mesh.hpp"
#include "ply.hpp"

namespace vfpp {

struct IcpResult {
  RigidPose pose;  // maps source into the target frame
  PointCloud aligned;
  double rms = 0;
  int iterations = 0;
  std::vector<double> rms_history;  // after each correspondence pass
};

/// Closed-form rigid alignment (Kabsch, no scale) minimizing sum |R a + t - b|^2.
/// Throws DegenerateCorrespondences when the cross-covariance has rank < 2.
RigidPose kabsch(std::span<const Vec3> a, std::span<const Vec3> b);

/// Point-to-point ICP. Mesh targets use their vertices.
IcpResult icp_register(const PointCloud& source, const std::vector<Vec3>& target, int max_iter = 50,
                       double tol = 1e-9);
IcpResult icp_register(const PointCloud& source, const TriangleMesh& target, int max_iter = 50, double tol = 1e-9);

struct SphereFit {
  Vec3 center = Vec3::Zero();
  double radius = 0;
  std::size_t inliers = 0;
  std::size_t total = 0;
  double inlier_threshold = 0;
  int trials = 0;

  double inlier_fraction() const { return total ? static_cast<double>(inliers) / total : 0.0; }
};

/// Sphere through four points from the linearized equation; nullopt when the
/// sample is near-coplanar (condition number above 1e8).
std::optional<std::pair<Vec3, double>> sphere_from_four(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

/// MSAC with truncated quadratic loss, adaptive trial count (p = 0.99) capped
/// at max_trials, then Gauss-Newton refinement on inliers.
SphereFit fit_sphere_msac(const PointCloud& cloud, double inlier_threshold = 1.0, int max_trials = 2000,
                          std::uint64_t seed = 0);

struct RadialError {
  double absolute_mm = 0;
  double relative = 0;  // absolute / r_actual
};
RadialError radial_error(const SphereFit& fit, double r_actual);

struct C2MReport {
  std::vector<double> distances;
  double mean = 0, rms = 0, max = 0;
  std::vector<double> bin_edges;  // bins + 1 edges over [0, max]
  std::vector<std::size_t> counts;
};

/// Exact unsigned point-to-triangle distances (BVH-accelerated, identical to
/// a full scan).
C2MReport cloud_to_mesh(const PointCloud& cloud, const TriangleMesh& mesh, int bins = 20);
/// Reference implementation scanning every triangle.
std::vector<double> cloud_to_mesh_brute_force(const PointCloud& cloud, const TriangleMesh& mesh);

nlohmann::json sphere_fit_to_json(const SphereFit& fit, double r_actual);
nlohmann::json c2m_to_json(const C2MReport& r);
void write_histogram_csv(const std::filesystem::path& p, const C2MReport& r);

}  // namespace vfpp
