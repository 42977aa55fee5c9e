#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"
#include "image.hpp"
#include "lm.hpp"
#include "patterns.hpp"
#include "phase.hpp"

namespace vfpp {

struct GridDetection {
  std::vector<Vec2> centers;  // row-major, matches board_object_points
  int pose_index = 0;
};

/// Finds the R x C circle lattice in a board image lit by the full-white
/// pattern. The board is assumed upright: its +x axis within 45 degrees of
/// image +u.
GridDetection detect_circle_grid(const GrayImage16& image, const CalibBoardSpec& spec, int pose_index = 0);

/// Projector pixel of every center: u_p = Phi_v T / (2 pi), v_p = Phi_h T / (2 pi).
std::vector<Vec2> map_centers_to_projector(const GridDetection& det, const PhaseMaps& phi_v, const PhaseMaps& phi_h,
                                           double period_px);

/// Observations of one device: per pose, one image point per object point.
using PoseObservations = std::vector<std::vector<Vec2>>;

struct IntrinsicCalibration {
  Intrinsics k;
  std::vector<RigidPose> poses;  // board to device
  double rms = 0;                // px, over points
  std::vector<double> per_pose_rms;
  LmReport lm;
};

/// Normalized DLT homography mapping plane (X, Y) to pixels.
Mat3 estimate_homography(std::span<const Vec3> object_points, std::span<const Vec2> image_points);

/// Closed-form zero-skew intrinsics from >= 3 homographies.
Intrinsics intrinsics_from_homographies(std::span<const Mat3> homographies, int width, int height);

/// Board-to-device pose from a homography and intrinsics.
RigidPose pose_from_homography(const Mat3& h, const Intrinsics& k);

IntrinsicCalibration calibrate_intrinsics(const PoseObservations& observations, std::span<const Vec3> object_points,
                                          int width, int height, const LmOptions& lm = {});
IntrinsicCalibration calibrate_intrinsics(std::span<const GridDetection> detections,
                                          std::span<const Vec3> object_points, int width, int height,
                                          const LmOptions& lm = {});

struct CalibrationResult {
  Intrinsics cam;
  Intrinsics proj;
  RigidPose cam_to_proj;
  std::vector<RigidPose> per_pose_board;  // board to camera, accepted poses only
  std::vector<int> accepted_poses;        // indices into the input pose list
  double stereo_reproj_rms = 0;           // camera residual RMS, px
  double proj_reproj_rms = 0;             // projector residual RMS, px
  std::vector<double> per_pose_rms;       // combined, per accepted pose
  LmReport lm;

  ProjectionMatrix camera_matrix() const;
  ProjectionMatrix projector_matrix() const;
};

struct StereoOptions {
  LmOptions lm;
  /// Poses whose RMS exceeds this multiple of the median are dropped once.
  double outlier_factor = 3.0;
};

CalibrationResult stereo_calibrate(const PoseObservations& cam, const PoseObservations& proj,
                                   std::span<const Vec3> object_points, const Intrinsics& cam_size,
                                   const Intrinsics& proj_size, const StereoOptions& opt = {});

/// RMS residuals of a parameter set, recomputed from scratch.
struct ReprojectionStats {
  double cam_rms = 0;
  double proj_rms = 0;
  std::vector<double> per_pose_rms;
};
ReprojectionStats reprojection_stats(const CalibrationResult& calib, const PoseObservations& cam,
                                     const PoseObservations& proj, std::span<const Vec3> object_points);

/// Jacobian of the stereo residual vector (camera residuals of every pose,
/// then projector residuals) in the ordering used by the refinement:
/// Kc(4), Kp(4), cam_to_proj(rot 3, trans 3), then per pose (rot 3, trans 3).
/// Exposed for gradient checks.
struct StereoState {
  Intrinsics cam, proj;
  RigidPose cam_to_proj;
  std::vector<RigidPose> boards;
};
Eigen::VectorXd stereo_residuals(const StereoState& s, const PoseObservations& cam, const PoseObservations& proj,
                                 std::span<const Vec3> object_points);
Eigen::MatrixXd stereo_jacobian(const StereoState& s, const PoseObservations& cam, const PoseObservations& proj,
                                std::span<const Vec3> object_points);
StereoState stereo_retract(const StereoState& s, const Eigen::VectorXd& step);

nlohmann::json calibration_to_json(const CalibrationResult& c);
CalibrationResult calibration_from_json(const nlohmann::json& j);
void save_calibration(const std::filesystem::path& p, const CalibrationResult& c);
CalibrationResult load_calibration(const std::filesystem::path& p);

}  // namespace vfpp
