#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "geometry.hpp"

namespace vfpp {

struct CameraTransferSpec {
  double fx = 0, fy = 0;  // px
  int width = 0, height = 0;
  double pixel_size_mm = 0;

  void validate() const;
};

/// Simulator camera parameters in millimeters.
struct SimCameraParams {
  double focal_mm = 0;
  double aperture_h_mm = 0;
  double aperture_v_mm = 0;
};

SimCameraParams camera_params_to_sim(const CameraTransferSpec& spec);

struct ProjectedExtent {
  double width = 0;   // mm, along image u
  double height = 0;  // mm, along image v
  double z = 0;       // mm
};

/// Back-projects the image corners (0,0) and (U,V) with
/// Z * pinv([R|t]) * K^-1 * [u v 1]^T and differences the world x and y.
ProjectedExtent projected_extent_at_distance(const Intrinsics& k, const RigidPose& pose, int res_u, int res_v,
                                             double z);
/// Same with a raw 3x4 extrinsic matrix; published matrices are rounded and
/// need not hold an exact rotation.
ProjectedExtent projected_extent_at_distance(const Intrinsics& k, const Mat34& mext, int res_u, int res_v, double z);

struct LineFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 1;
  double mae = 0;

  double at(double z) const { return slope * z + intercept; }
};

struct ExtentSweep {
  std::vector<ProjectedExtent> rows;
  LineFit width_fit;
  LineFit height_fit;
};

ExtentSweep extent_linearity_sweep(const Intrinsics& k, const Mat34& mext, int res_u, int res_v,
                                   std::span<const double> z_list);
ExtentSweep extent_linearity_sweep(const Intrinsics& k, const RigidPose& pose, int res_u, int res_v,
                                   std::span<const double> z_list);

/// Projector intrinsics and the unvalidated extrinsic matrix of a calibration
/// file ({"projector": {"intrinsics", "extrinsics": {"r", "t"}}}).
struct ProjectorModel {
  Intrinsics k;
  Mat34 mext = Mat34::Zero();
};
ProjectorModel projector_model_from_json(const nlohmann::json& calibration);

/// Least-squares line through (x, y) with R^2 and mean absolute residual.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

nlohmann::json sim_params_to_json(const SimCameraParams& p);
nlohmann::json extent_to_json(const ProjectedExtent& e);
nlohmann::json sweep_to_json(const ExtentSweep& s);
/// Columns z_mm, width_mm, height_mm, fit_residual_mm (larger of the two axes).
void write_sweep_csv(const std::filesystem::path& p, const ExtentSweep& s);

}  // namespace vfpp
