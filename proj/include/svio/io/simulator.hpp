#pragma once

#include "svio/io/dataset.hpp"

namespace svio {

// Analytic camera+IMU scenario: a twice-differentiable trajectory inside a
// textured box scene, sampled into exact measurements.
struct SyntheticSpec {
  double duration = 30.0;
  double cam_rate = 20.0;
  double imu_rate = 200.0;

  int width = 192, height = 144;
  double fx = 160.0, fy = 160.0;

  // stationary | const_velocity | circle_sinusoid
  std::string trajectory = "circle_sinusoid";
  double lead_in = 0.4;  // rest before the excitation ramps up, seconds
  double ramp = 1.2;     // C2 ramp duration
  double radius = 0.8;
  double angular_rate = 0.9;
  double z_amp = 0.25, z_freq = 1.7;
  double rot_amp = 0.22;
  Vec3 rot_freq = Vec3(1.3, 1.1, 0.7);
  double line_velocity = 0.5;  // const_velocity mode, m/s along x

  double scene_distance = 4.0;  // front wall depth; sets the true scale
  int texture_octaves = 4;
  std::uint64_t seed = 1;

  Vec3 gyro_bias_true = Vec3::Zero();
  Vec3 accel_bias_true = Vec3::Zero();
  double gyro_noise = 0.0;   // rad/s/sqrt(Hz), 0 disables
  double accel_noise = 0.0;  // m/s^2/sqrt(Hz)
  double image_noise = 0.0;  // intensity std deviation

  Se3 t_imu_cam;  // camera-to-IMU extrinsics used for rendering

  NoiseConfig estimator_noise() const {
    NoiseConfig n;
    n.gyro_noise_density = std::max(gyro_noise, 1.7e-4);
    n.accel_noise_density = std::max(accel_noise, 2.0e-3);
    n.rate_hz = imu_rate;
    return n;
  }
};

struct TrajectorySample {
  Se3 t_w_imu;
  Vec3 velocity = Vec3::Zero();
  Vec3 accel_world = Vec3::Zero();
  Vec3 gyro_body = Vec3::Zero();
};

class SyntheticTrajectory {
 public:
  explicit SyntheticTrajectory(const SyntheticSpec& spec);
  TrajectorySample sample(double t) const;

 private:
  SyntheticSpec spec_;
  Mat33 r_base_;
};

SyntheticSpec spec_from_config(const Config& cfg);

DatasetSequence simulate(const SyntheticSpec& spec);

// Renders the scene from an arbitrary camera pose (shared with the tests).
Image render_view(const SyntheticSpec& spec, const Se3& t_w_cam);

// Exact inverse depth (1/z in the camera frame, metric units) of the scene
// surface under a pixel; 0 when no surface is hit.
double true_inverse_depth(const SyntheticSpec& spec, const Se3& t_w_cam,
                          const Vec2& pixel);

}  // namespace svio
