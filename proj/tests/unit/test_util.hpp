#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "geometry.hpp"

namespace testutil {

inline std::mt19937_64& rng() {
  static std::mt19937_64 g(12345);
  return g;
}

inline double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng()); }

inline vfpp::Mat3 random_rotation(double max_angle = M_PI) {
  vfpp::Vec3 axis(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1));
  axis.normalize();
  return Eigen::AngleAxisd(uniform(-max_angle, max_angle), axis).toRotationMatrix();
}

inline vfpp::RigidPose random_pose(double max_angle = M_PI, double max_t = 200) {
  vfpp::RigidPose p;
  p.R = random_rotation(max_angle);
  p.t = vfpp::Vec3(uniform(-max_t, max_t), uniform(-max_t, max_t), uniform(-max_t, max_t));
  return p;
}

inline vfpp::Intrinsics random_intrinsics() {
  vfpp::Intrinsics k;
  k.width = 640 + static_cast<int>(uniform(0, 640));
  k.height = 480 + static_cast<int>(uniform(0, 480));
  k.fx = uniform(400, 3000);
  k.fy = k.fx * uniform(0.9, 1.1);
  k.ox = uniform(0.3, 0.7) * k.width;
  k.oy = uniform(0.3, 0.7) * k.height;
  return k;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vfpp_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
