#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "image.hpp"
#include "patterns.hpp"
#include "scene.hpp"

namespace vfpp {

struct SurfaceHit {
  double t = 0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // faces the ray origin
  int object = -1;
  /// Plane-local millimeters for planes; unused otherwise.
  Vec2 uv = Vec2::Zero();
};

/// Nearest-hit queries over a scene. Mesh objects get a BVH built once.
class SceneTracer {
 public:
  explicit SceneTracer(const Scene& scene);
  ~SceneTracer();
  SceneTracer(const SceneTracer&) = delete;
  SceneTracer& operator=(const SceneTracer&) = delete;

  std::optional<SurfaceHit> intersect(const Ray& ray, double tmin = 1e-6) const;
  /// True if anything lies along origin + t dir for t in (tmin, tmax).
  bool occluded(const Vec3& origin, const Vec3& dir, double tmin, double tmax) const;

 private:
  const Scene& scene_;
  std::vector<std::unique_ptr<MeshBvh>> bvh_;
};

/// Convenience wrapper building a tracer per call.
std::optional<SurfaceHit> intersect_scene(const Ray& ray, const Scene& scene);

/// Blinn-Phong exponent from roughness: 2 / max(r, 1e-3)^4 - 2.
double specular_exponent(double roughness);

/// Reflected fraction toward v for unit irradiance from l, including the
/// n.l cosine. Zero when l is below the surface.
double shade_brdf(const Material& m, double albedo, const Vec3& n, const Vec3& l, const Vec3& v);

/// Per-sample light transport of one scene configuration. The projector term
/// is linear in the projected texture, so a capture session traces the scene
/// once and shades every pattern from this cache.
class FrameTransport {
 public:
  explicit FrameTransport(const Scene& scene);

  /// Radiance before quantization (1.0 maps to 65535).
  RasterF64 radiance(const GrayImage16* pattern) const;
  /// Quantized, clamped 16-bit frame.
  GrayImage16 render(const GrayImage16* pattern) const;

  int width() const { return width_; }
  int height() const { return height_; }
  /// Object hit by the central ray of each pixel (-1 for a miss).
  const std::vector<int>& pixel_object() const { return pixel_object_; }

 private:
  struct Sample {
    double ambient = 0;
    double weight = 0;  // projector transfer (0 when unlit)
    double up = 0, vp = 0;
  };

  int width_ = 0, height_ = 0, ss_ = 1;
  int proj_w_ = 0, proj_h_ = 0;
  std::vector<Sample> samples_;  // pixel-major, ss_^2 per pixel
  std::vector<int> pixel_object_;
};

/// Renders one frame; `pattern == nullptr` switches the projector off.
GrayImage16 render_frame(const Scene& scene, const GrayImage16* pattern);

/// Board pose protocol: translations uniform in +-translation_mm along x and
/// y, tilts about the camera x and y axes with magnitude in
/// [tilt_min_deg, tilt_max_deg], all around the base pose whose board center
/// sits distance_mm in front of the rig.
struct PoseProtocol {
  int count = 18;
  double translation_mm = 15.0;
  double tilt_min_deg = 5.0;
  double tilt_max_deg = 15.0;
  double distance_mm = 500.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Board-to-world poses (board frame origin at the first circle center).
std::vector<RigidPose> generate_board_poses(const PoseProtocol& protocol, const CalibBoardSpec& spec);

/// Places a plane object carrying `board` so that board-frame points map to
/// world through `board_to_world`.
SceneObject make_board_object(const CalibBoardSpec& spec, const CalibBoard& board, const RigidPose& board_to_world,
                              const Material& material = {});
void place_board(SceneObject& board_object, const BoardReport& report, const RigidPose& board_to_world);

/// True when every circle center projects inside the camera frame.
bool board_in_view(const Scene& scene, const CalibBoardSpec& spec, const RigidPose& board_to_world);

struct CaptureRecord {
  int pose = 0;
  std::string pattern;
  std::string file;  // relative to the session directory
  std::string hash;  // FNV-1a of the samples
};

struct BoardPlacement {
  int object = -1;  // index of the board plane in the scene
  BoardReport report;
  CalibBoardSpec spec;
  std::vector<RigidPose> poses;
};

using FrameSink = std::function<void(int pose, std::size_t pattern, const GrayImage16& frame)>;

/// Renders every (pose, pattern) pair in order, passing frames to `sink`.
/// Without a placement the scene is rendered once as given. Poses that leave
/// the camera view are reported through `warnings`.
void capture_frames(const Scene& scene, std::span<const PatternEntry> patterns, const BoardPlacement* placement,
                    const FrameSink& sink, std::vector<std::string>* warnings = nullptr);

/// File-backed session: frames go to out_dir/pose_XX/<id>.<ext> and one JSON
/// record per frame to out_dir/manifest.jsonl.
std::vector<CaptureRecord> run_capture_session(const Scene& scene, std::span<const PatternEntry> patterns,
                                               const BoardPlacement* placement, const std::filesystem::path& out_dir,
                                               ImageFormat format = ImageFormat::Png,
                                               std::vector<std::string>* warnings = nullptr);

std::vector<CaptureRecord> read_capture_manifest(const std::filesystem::path& manifest);

}  // namespace vfpp
