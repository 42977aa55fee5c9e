#include "geometry.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <sstream>

#include "error.hpp"

namespace vfpp {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::FrameCountMismatch: return "FrameCountMismatch";
    case ErrorCode::PatternExceedsPlane: return "PatternExceedsPlane";
    case ErrorCode::GridNotFound: return "GridNotFound";
    case ErrorCode::AmbiguousOrientation: return "AmbiguousOrientation";
    case ErrorCode::CenterMasked: return "CenterMasked";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::InconsistentPoseCount: return "InconsistentPoseCount";
    case ErrorCode::SingularGeometry: return "SingularGeometry";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DegenerateCorrespondences: return "DegenerateCorrespondences";
    case ErrorCode::NoValidModel: return "NoValidModel";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ThresholdExceeded: return "ThresholdExceeded";
  }
  return "Unknown";
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, ox, 0.0, fy, oy, 0.0, 0.0, 1.0;
  return k;
}

bool Intrinsics::valid() const {
  return std::isfinite(fx) && std::isfinite(fy) && fx > 0.0 && fy > 0.0 && width >= 1 &&
         height >= 1 && ox >= 0.0 && ox < width && oy >= 0.0 && oy < height;
}

void Intrinsics::validate() const {
  if (!valid()) {
    std::ostringstream os;
    os << "invalid intrinsics fx=" << fx << " fy=" << fy << " ox=" << ox << " oy=" << oy
       << " size=" << width << "x" << height;
    throw Error(ErrorCode::InvalidArgument, os.str());
  }
}

RigidPose RigidPose::inverse() const {
  RigidPose inv;
  inv.R = R.transpose();
  inv.t = -inv.R * t;
  return inv;
}

RigidPose operator*(const RigidPose& a, const RigidPose& b) {
  RigidPose out;
  out.R = a.R * b.R;
  out.t = a.R * b.t + a.t;
  return out;
}

Mat34 RigidPose::matrix() const {
  Mat34 m;
  m.leftCols<3>() = R;
  m.col(3) = t;
  return m;
}

bool RigidPose::valid(double tol) const {
  if (!R.allFinite() || !t.allFinite()) return false;
  const Mat3 e = R.transpose() * R - Mat3::Identity();
  return e.cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

void RigidPose::validate(double tol) const {
  if (!valid(tol)) throw Error(ErrorCode::InvalidArgument, "rotation is not orthonormal");
}

ProjectionMatrix compose_projection(const Intrinsics& k, const RigidPose& pose, DeviceRole role) {
  return {k.matrix() * pose.matrix(), role};
}

Vec2 project_point(const ProjectionMatrix& m, const Vec3& x) {
  const Vec3 h = m.m * x.homogeneous();
  if (std::abs(h.z()) <= 1e-12) throw Error(ErrorCode::PointAtInfinity, "homogeneous scale ~ 0");
  return {h.x() / h.z(), h.y() / h.z()};
}

Mat3 intrinsic_inverse(const Intrinsics& k) {
  Mat3 inv;
  inv << 1.0 / k.fx, 0.0, -k.ox / k.fx,  //
      0.0, 1.0 / k.fy, -k.oy / k.fy,     //
      0.0, 0.0, 1.0;
  return inv;
}

Ray pixel_ray(const Intrinsics& k, const RigidPose& pose, double u, double v) {
  Ray r;
  r.origin = pose.center();
  r.direction = (pose.R.transpose() * (intrinsic_inverse(k) * Vec3(u, v, 1.0))).normalized();
  return r;
}

Mat43 extrinsic_pseudo_inverse(const Mat34& mext) {
  Eigen::JacobiSVD<Mat34> svd(mext, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s(2) >= 1e-10 * s(0)) || s(0) == 0.0)
    throw Error(ErrorCode::RankDeficient, "extrinsic matrix has rank < 3");
  // V * Sigma^+ * U^T with Sigma^+ 4x3.
  Mat43 sigma_pinv = Mat43::Zero();
  for (int i = 0; i < 3; ++i) sigma_pinv(i, i) = 1.0 / s(i);
  return svd.matrixV() * sigma_pinv * svd.matrixU().transpose();
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

Mat3 rotation_from_axis_angle(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(w);
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Vec3 axis_angle_from_rotation(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  return aa.angle() * aa.axis();
}

Mat3 project_to_rotation(const Mat3& M) {
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

double rotation_angle_between(const Mat3& Ra, const Mat3& Rb) {
  return Eigen::AngleAxisd(Ra.transpose() * Rb).angle();
}

Mat3 rotation_x(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rotation_y(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rotation_z(double rad) { return Eigen::AngleAxisd(rad, Vec3::UnitZ()).toRotationMatrix(); }

}  // namespace vfpp
