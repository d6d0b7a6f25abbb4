#pragma once

#include <vector>

#include "svio/geometry/se3.hpp"

namespace svio {

struct ImuMeasurement {
  Timestamp t = 0;
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2 specific force
};

struct ImuBias {
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();

  Vec6 vector() const {
    Vec6 v;
    v << gyro, accel;
    return v;
  }
  static ImuBias from_vector(const Vec6& v) {
    return ImuBias{v.head<3>(), v.tail<3>()};
  }
  ImuBias operator+(const Vec6& d) const {
    return ImuBias{gyro + d.head<3>(), accel + d.tail<3>()};
  }
};

// Continuous-time white-noise / random-walk densities, discretized per step.
struct NoiseConfig {
  double gyro_noise_density = 1.7e-4;   // rad/s/sqrt(Hz)
  double accel_noise_density = 2.0e-3;  // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 1.9e-5;       // rad/s^2/sqrt(Hz)
  double accel_bias_walk = 3.0e-3;      // m/s^3/sqrt(Hz)
  double rate_hz = 200.0;
};

// IMU-rate state in the metric frame: T_w_imu maps body to world.
struct ImuState {
  Se3 pose;
  Vec3 velocity = Vec3::Zero();
  ImuBias bias;
};

// Tangent ordering (pose[trans, rot], velocity, bias[gyro, accel]).
inline ImuState boxplus(const ImuState& s, const Vec15& d) {
  ImuState out;
  out.pose = boxplus(s.pose, Vec6(d.head<6>()));
  out.velocity = s.velocity + d.segment<3>(6);
  out.bias = s.bias + Vec6(d.tail<6>());
  return out;
}

inline Vec15 boxminus(const ImuState& s, const ImuState& ref) {
  Vec15 d;
  d.head<6>() = boxminus(s.pose, ref.pose);
  d.segment<3>(6) = s.velocity - ref.velocity;
  d.tail<6>() = s.bias.vector() - ref.bias.vector();
  return d;
}

// Measurements covering [a, b] from a time-sorted stream, with linearly
// interpolated samples at both boundaries.
std::vector<ImuMeasurement> slice_measurements(
    const std::vector<ImuMeasurement>& stream, Timestamp a, Timestamp b);

}  // namespace svio
