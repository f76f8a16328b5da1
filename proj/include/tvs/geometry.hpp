#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace tvs {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// Global frame convention used everywhere:
//   x  superior-inferior, the scan axis
//   y  lateral (left-right across the neck)
//   z  anterior-posterior, pointing up out of the neck
// Millimetres and seconds throughout.
struct ProbePose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();
  double timestamp = 0.0;
};

inline Mat3 rot_x(double angle_rad) {
  const double c = std::cos(angle_rad), s = std::sin(angle_rad);
  Mat3 m;
  m << 1, 0, 0,
       0, c, -s,
       0, s, c;
  return m;
}

inline constexpr double deg2rad(double d) { return d * M_PI / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / M_PI; }

}  // namespace tvs
