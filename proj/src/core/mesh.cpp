#include "mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "error.hpp"

namespace vfpp {

void TriangleMesh::validate(double min_area) const {
  const int nv = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f])
      if (idx < 0 || idx >= nv)
        throw Error(ErrorCode::InvalidArgument, "face " + std::to_string(f) + " indexes a missing vertex");
    if (face_area(f) < min_area) throw Error(ErrorCode::InvalidArgument, "face " + std::to_string(f) + " is degenerate");
  }
  for (const auto& v : vertices)
    if (!v.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite mesh vertex");
}

Vec3 TriangleMesh::face_normal(std::size_t f) const {
  const auto& t = faces[f];
  return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).normalized();
}

double TriangleMesh::face_area(std::size_t f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

TriangleMesh make_uv_sphere(const Vec3& center, double radius, int stacks, int slices) {
  if (stacks < 2 || slices < 3 || !(radius > 0.0))
    throw Error(ErrorCode::InvalidArgument, "sphere mesh needs stacks >= 2, slices >= 3, radius > 0");
  TriangleMesh m;
  m.vertices.push_back(center + Vec3(0, 0, radius));
  for (int i = 1; i < stacks; ++i) {
    const double th = std::numbers::pi * i / stacks;
    for (int j = 0; j < slices; ++j) {
      const double ph = 2.0 * std::numbers::pi * j / slices;
      m.vertices.push_back(center +
                           radius * Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)));
    }
  }
  m.vertices.push_back(center - Vec3(0, 0, radius));
  const int south = static_cast<int>(m.vertices.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * slices + (j % slices); };
  for (int j = 0; j < slices; ++j) m.faces.push_back({0, ring(1, j), ring(1, j + 1)});
  for (int i = 1; i + 1 < stacks; ++i)
    for (int j = 0; j < slices; ++j) {
      m.faces.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
      m.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
    }
  for (int j = 0; j < slices; ++j) m.faces.push_back({south, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
  return m;
}

double Aabb::distance2(const Vec3& p) const {
  const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
  return d.squaredNorm();
}

bool Aabb::hit(const Vec3& origin, const Vec3& inv_dir, double tmin, double tmax) const {
  for (int a = 0; a < 3; ++a) {
    double t0 = (lo[a] - origin[a]) * inv_dir[a];
    double t1 = (hi[a] - origin[a]) * inv_dir[a];
    if (inv_dir[a] < 0.0) std::swap(t0, t1);
    // NaN from 0 * inf leaves the bounds untouched.
    if (t0 > tmin) tmin = t0;
    if (t1 < tmax) tmax = t1;
    if (tmax < tmin) return false;
  }
  return true;
}

std::optional<TriangleHit> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                                              const Vec3& c, double tmin) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-14 * e1.norm() * e2.norm()) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double b1 = s.dot(p) * inv;
  if (b1 < 0.0 || b1 > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double b2 = dir.dot(q) * inv;
  if (b2 < 0.0 || b1 + b2 > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (!(t > tmin)) return std::nullopt;
  return TriangleHit{t, -1, b1, b2};
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, Real-Time Collision Detection, 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double point_face_distance(const TriangleMesh& mesh, std::size_t face, const Vec3& p) {
  const auto& t = mesh.faces[face];
  return (p - closest_point_on_triangle(p, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]])).norm();
}

MeshBvh::MeshBvh(const TriangleMesh& mesh) : mesh_(&mesh) {
  const int n = static_cast<int>(mesh.faces.size());
  order_.resize(n);
  face_boxes_.resize(n);
  centroids_.resize(n);
  for (int f = 0; f < n; ++f) {
    order_[f] = f;
    Aabb b;
    for (int idx : mesh.faces[f]) b.extend(mesh.vertices[idx]);
    face_boxes_[f] = b;
    centroids_[f] = 0.5 * (b.lo + b.hi);
  }
  if (n > 0) {
    nodes_.reserve(2 * n);
    build(0, n, 0);
  }
}

int MeshBvh::build(int first, int count, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Aabb box, cbox;
  for (int i = first; i < first + count; ++i) {
    box.extend(face_boxes_[order_[i]]);
    cbox.extend(centroids_[order_[i]]);
  }
  nodes_[id].box = box;
  if (count <= 4 || depth > 60) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis = 0;
  const Vec3 ext = cbox.hi - cbox.lo;
  if (ext[1] > ext[axis]) axis = 1;
  if (ext[2] > ext[axis]) axis = 2;
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count, [&](int a, int b) {
    if (centroids_[a][axis] != centroids_[b][axis]) return centroids_[a][axis] < centroids_[b][axis];
    return a < b;
  });
  const int left = build(first, mid - first, depth + 1);
  const int right = build(mid, first + count - mid, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::optional<TriangleHit> MeshBvh::intersect(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv = dir.cwiseInverse();
  std::optional<TriangleHit> best;
  double limit = tmax;
  int stack[128];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    if (!node.box.hit(origin, inv, tmin, limit)) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const int f = order_[i];
        const auto& t = mesh_->faces[f];
        auto h = intersect_triangle(origin, dir, mesh_->vertices[t[0]], mesh_->vertices[t[1]], mesh_->vertices[t[2]],
                                    tmin);
        // Ties resolve to the lowest face index so the result matches a linear scan.
        if (h && (h->t < limit || (best && h->t == limit && f < best->face))) {
          h->face = f;
          limit = h->t;
          best = h;
        }
      }
    } else {
      stack[sp++] = node.left;
      stack[sp++] = node.right;
    }
  }
  return best;
}

bool MeshBvh::occluded(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const {
  if (nodes_.empty()) return false;
  const Vec3 inv = dir.cwiseInverse();
  int stack[128];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    if (!node.box.hit(origin, inv, tmin, tmax)) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const auto& t = mesh_->faces[order_[i]];
        auto h = intersect_triangle(origin, dir, mesh_->vertices[t[0]], mesh_->vertices[t[1]], mesh_->vertices[t[2]],
                                    tmin);
        if (h && h->t < tmax) return true;
      }
    } else {
      stack[sp++] = node.left;
      stack[sp++] = node.right;
    }
  }
  return false;
}

double MeshBvh::distance(const Vec3& p) const {
  if (nodes_.empty()) throw Error(ErrorCode::InvalidArgument, "distance query on an empty mesh");
  double best2 = std::numeric_limits<double>::infinity();
  double best = best2;
  int stack[128];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& node = nodes_[stack[--sp]];
    // Strict comparison keeps every box that could hold an equal minimum.
    if (node.box.distance2(p) > best2) continue;
    if (node.left < 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        const double d = point_face_distance(*mesh_, order_[i], p);
        if (d < best) {
          best = d;
          best2 = d * d * (1.0 + 1e-12);
        }
      }
    } else {
      const double dl = nodes_[node.left].box.distance2(p);
      const double dr = nodes_[node.right].box.distance2(p);
      // Visit the nearer child first.
      if (dl < dr) {
        stack[sp++] = node.right;
        stack[sp++] = node.left;
      } else {
        stack[sp++] = node.left;
        stack[sp++] = node.right;
      }
    }
  }
  return best;
}

}  // namespace vfpp
