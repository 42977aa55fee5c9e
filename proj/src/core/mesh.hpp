#pragma once

#include <array>
#include <optional>
#include <vector>

#include "geometry.hpp"

namespace vfpp {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  /// Throws InvalidArgument on out-of-range indices or faces with area below
  /// `min_area` (mm^2).
  void validate(double min_area = 1e-12) const;
  Vec3 face_normal(std::size_t f) const;
  double face_area(std::size_t f) const;
};

/// UV sphere, outward faces.
TriangleMesh make_uv_sphere(const Vec3& center, double radius, int stacks, int slices);

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  /// Squared distance from p to the box (0 inside).
  double distance2(const Vec3& p) const;
  /// Slab test; returns entry distance if the ray hits within (tmin, tmax).
  bool hit(const Vec3& origin, const Vec3& inv_dir, double tmin, double tmax) const;
};

struct TriangleHit {
  double t = 0;
  int face = -1;
  double b1 = 0, b2 = 0;  // barycentric weights of vertices 1 and 2
};

/// Moller-Trumbore; two-sided.
std::optional<TriangleHit> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                              const Vec3& c, double tmin);

/// Closest point on triangle abc to p (all Voronoi regions handled).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Median-split bounding volume hierarchy over mesh faces.
class MeshBvh {
 public:
  MeshBvh() = default;
  explicit MeshBvh(const TriangleMesh& mesh);

  std::optional<TriangleHit> intersect(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const;
  bool occluded(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const;
  /// Exact minimum distance from p to the mesh surface.
  double distance(const Vec3& p) const;

  const TriangleMesh* mesh() const { return mesh_; }

 private:
  struct Node {
    Aabb box;
    int left = -1, right = -1;  // children, or -1 for leaves
    int first = 0, count = 0;   // leaf face range into order_
  };

  int build(int first, int count, int depth);

  const TriangleMesh* mesh_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Aabb> face_boxes_;
  std::vector<Vec3> centroids_;
};

/// Distance from p to one triangle of `mesh`.
double point_face_distance(const TriangleMesh& mesh, std::size_t face, const Vec3& p);

}  // namespace vfpp
