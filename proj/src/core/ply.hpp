#pragma once

#include <filesystem>
#include <vector>

#include "geometry.hpp"
#include "mesh.hpp"

namespace vfpp {

struct PointCloud {
  std::vector<Vec3> points;
  /// Source camera pixel per point; empty when unknown.
  std::vector<Vec2> pixels;

  std::size_t size() const { return points.size(); }
  bool has_pixels() const { return !pixels.empty() && pixels.size() == points.size(); }
};

enum class PlyEncoding { Ascii, BinaryLittleEndian };

/// Vertices as float64 x, y, z plus u, v when the cloud carries source pixels.
void write_ply(const std::filesystem::path& p, const PointCloud& cloud, PlyEncoding enc = PlyEncoding::BinaryLittleEndian);
void write_ply_mesh(const std::filesystem::path& p, const TriangleMesh& mesh,
                    PlyEncoding enc = PlyEncoding::BinaryLittleEndian);

/// Readers accept ascii and binary_little_endian with any numeric property
/// types; faces are triangulated as fans.
PointCloud read_ply_cloud(const std::filesystem::path& p);
TriangleMesh read_ply_mesh(const std::filesystem::path& p);

}  // namespace vfpp
