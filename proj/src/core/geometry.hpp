#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vfpp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat43 = Eigen::Matrix<double, 4, 3>;

/// Zero-skew pinhole intrinsics. Pixel (u, v) = (column, row), origin at the
/// top-left pixel center.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double ox = 0.0;
  double oy = 0.0;
  int width = 1;
  int height = 1;

  Mat3 matrix() const;
  bool valid() const;
  /// Throws InvalidArgument when an invariant is violated.
  void validate() const;
};

/// World-to-device transform: x_device = R * x_world + t (t in millimeters).
struct RigidPose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static RigidPose identity() { return {}; }
  /// Device optical center in world coordinates.
  Vec3 center() const { return -R.transpose() * t; }
  Vec3 apply(const Vec3& x) const { return R * x + t; }
  RigidPose inverse() const;
  /// (a * b)(x) = a(b(x)).
  friend RigidPose operator*(const RigidPose& a, const RigidPose& b);
  Mat34 matrix() const;
  bool valid(double tol = 1e-9) const;
  void validate(double tol = 1e-9) const;
};

enum class DeviceRole { Camera, Projector };

struct ProjectionMatrix {
  Mat34 m = Mat34::Zero();
  DeviceRole role = DeviceRole::Camera;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double t) const { return origin + t * direction; }
};

ProjectionMatrix compose_projection(const Intrinsics& k, const RigidPose& pose,
                                    DeviceRole role = DeviceRole::Camera);

/// Throws PointAtInfinity when the homogeneous scale is within 1e-12 of zero.
Vec2 project_point(const ProjectionMatrix& m, const Vec3& x);

Ray pixel_ray(const Intrinsics& k, const RigidPose& pose, double u, double v);

Mat3 intrinsic_inverse(const Intrinsics& k);

/// Moore-Penrose pseudo-inverse of a 3x4 extrinsic matrix via SVD.
/// Throws RankDeficient when sigma_min < 1e-10 * sigma_max.
Mat43 extrinsic_pseudo_inverse(const Mat34& mext);

// Rotation helpers (axis-angle <-> matrix).
Mat3 rotation_from_axis_angle(const Vec3& w);
Vec3 axis_angle_from_rotation(const Mat3& R);
Mat3 skew(const Vec3& v);
/// Nearest rotation in Frobenius norm.
Mat3 project_to_rotation(const Mat3& M);
/// Angle of the relative rotation Ra^T Rb, in radians.
double rotation_angle_between(const Mat3& Ra, const Mat3& Rb);

Mat3 rotation_x(double rad);
Mat3 rotation_y(double rad);
Mat3 rotation_z(double rad);

}  // namespace vfpp
