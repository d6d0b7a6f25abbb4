#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>

namespace svio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using VecX = Eigen::VectorXd;

using Mat22 = Eigen::Matrix2d;
using Mat33 = Eigen::Matrix3d;
using Mat44 = Eigen::Matrix4d;
using Mat66 = Eigen::Matrix<double, 6, 6>;
using Mat77 = Eigen::Matrix<double, 7, 7>;
using Mat1515 = Eigen::Matrix<double, 15, 15>;
using MatXX = Eigen::MatrixXd;

using Quat = Eigen::Quaterniond;

// Nanosecond timestamps. Kept in integer form end to end; convert to seconds
// only for durations entering floating-point math.
using Timestamp = std::int64_t;

inline double to_seconds(Timestamp t) { return 1e-9 * static_cast<double>(t); }
inline double seconds_between(Timestamp a, Timestamp b) {
  return 1e-9 * static_cast<double>(b - a);
}
inline Timestamp from_seconds(double s) {
  return static_cast<Timestamp>(s * 1e9 + (s >= 0 ? 0.5 : -0.5));
}

// Gravity magnitude; only the direction is estimated.
constexpr double kGravityNorm = 9.81;

inline Vec3 gravity_world() { return Vec3(0.0, 0.0, -kGravityNorm); }

}  // namespace svio
