#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"
#include "image.hpp"
#include "mesh.hpp"

namespace vfpp {

struct Material {
  double albedo = 0.8;
  double roughness = 0.95;
  double specular = 0.15;
  double metallic = 0.0;
  double ao_to_diffuse = 0.95;

  void validate() const;
};

struct SphereGeom {
  Vec3 center = Vec3(0, 0, 500);
  double radius = 50.0;
};

/// Rectangle spanning plane-local x in [0, width], y in [0, height], z = 0.
/// `placement` maps plane-local points to world (x_world = R x_local + t).
/// The optional texture multiplies albedo and covers the full rectangle.
struct PlaneGeom {
  RigidPose placement;
  double width = 100.0;
  double height = 100.0;
  std::shared_ptr<const GrayImage16> texture;
  std::string texture_path;  // kept for serialization only
};

struct MeshGeom {
  std::shared_ptr<const TriangleMesh> mesh;
  std::string mesh_path;
};

struct SceneObject {
  std::string name;
  std::variant<SphereGeom, PlaneGeom, MeshGeom> geometry;
  Material material;
};

enum class Falloff { None, InverseSquare };

/// Projector modeled as a pinhole light. `pose` maps world to projector
/// coordinates. The projected texture is supplied per frame.
struct ProjectorLight {
  Intrinsics intrinsics{1820.10, 1819.95, 455.74, 571.74, 912, 1140};
  RigidPose pose;
  double intensity = 0.8;
  Falloff falloff = Falloff::None;
  /// Distance (mm) at which inverse-square falloff equals 1.
  double falloff_reference_mm = 500.0;
};

enum class AmbientKind { UniformSky, RectPanel };

/// Rect panels emit from the local z = 0 rectangle centered at the origin,
/// toward local +z; `placement` maps panel-local to world.
struct AmbientLight {
  AmbientKind kind = AmbientKind::UniformSky;
  double intensity = 0.05;
  RigidPose placement;
  double width = 500.0;
  double height = 500.0;
  int samples = 4;  // per axis, stratified

  void validate() const;
};

struct CameraModel {
  Intrinsics intrinsics{2285.77, 2285.77, 479.5, 479.5, 960, 960};
  RigidPose pose;
};

struct RenderSettings {
  int supersample = 1;  // per axis
};

struct Scene {
  CameraModel camera;
  ProjectorLight projector;
  std::vector<AmbientLight> ambients;
  std::vector<SceneObject> objects;
  RenderSettings render;

  void validate() const;
  int find_object(const std::string& name) const;
};

/// World-to-device pose of a device at `position` looking at `target`, with
/// image +y roughly along `down`.
RigidPose look_at_pose(const Vec3& position, const Vec3& target, const Vec3& down = Vec3(0, 1, 0));

/// Scene JSON with a top-level "unit" tag ("mm" or "m"); lengths are converted
/// to millimeters on load. Relative texture and mesh paths resolve against
/// `base_dir`.
Scene scene_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json scene_to_json(const Scene& scene);
Scene load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const Scene& scene);

nlohmann::json intrinsics_to_json(const Intrinsics& k);
Intrinsics intrinsics_from_json(const nlohmann::json& j);
/// {"r": 9 row-major, "t": 3, "unit": "mm"}; `scale` converts t to mm.
nlohmann::json pose_to_json(const RigidPose& p);
RigidPose pose_from_json(const nlohmann::json& j, double scale = 1.0);

/// Baseline desk-scale rig used by the tests and the default pipeline: camera
/// at the origin, projector 125 mm left and 100 mm below aimed at (0, 0, 500).
Scene default_rig(int camera_size = 960);

}  // namespace vfpp
