#pragma once

#include <memory>
#include <vector>

#include "svio/imu/imu_types.hpp"
#include "svio/optimize/variables.hpp"
#include "svio/vision/camera.hpp"
#include "svio/vision/photometric.hpp"

namespace svio {

struct HostedPoint {
  enum class Status { active, marginalized, dropped };

  Vec2 pixel = Vec2::Zero();  // location in the host keyframe, level 0
  double idepth = 0.0;        // inverse depth in the host frame, DSO units
  Status status = Status::active;
  int obs_count = 0;          // keyframes with a valid residual, last solve
  double mean_energy = 0.0;   // average pattern energy per observation
};

// Per-keyframe state in the DSO frame (Eq-5-style state block plus image data).
struct FrameState {
  int id = -1;
  Timestamp t = 0;
  Se3 t_cam_w;  // world-to-camera, DSO frame
  Vec3 velocity = Vec3::Zero();  // DSO-frame velocity; metric is s * R_md * v
  ImuBias bias;
  AffineBrightness affine;
  std::shared_ptr<const ImagePyramid> pyramid;
  bool is_keyframe = true;
  std::vector<HostedPoint> points;

  const Image& image(int level = 0) const { return pyramid->level(level); }
};

// Translation-free SIM(3) element mapping the DSO frame to the metric frame.
struct ScaleGravityTransform {
  Quat q_md = Quat::Identity();
  double log_scale = 0.0;

  double scale() const { return std::exp(log_scale); }
  Sim3 as_sim3() const { return Sim3(q_md, Vec3::Zero(), scale()); }

  StateValue value() const {
    return StateValue::from_scale_gravity(q_md, log_scale);
  }
  static ScaleGravityTransform from_value(const StateValue& v) {
    return {v.rotation(), v.log_scale()};
  }

  // Tangent (rotation, log-scale); right-multiplicative, translation stays 0.
  void box_plus(const Vec4& d) {
    q_md = (q_md * so3_exp(d.head<3>())).normalized();
    log_scale += d[3];
  }
};

struct FullState {
  CameraModel cam;
  Se3 t_imu_cam;  // fixed camera-to-IMU extrinsics
  ScaleGravityTransform sg;
  // weak live anchor for the scale/gravity block; keeps the bootstrap's
  // unobservable directions from drifting before inertial excitation
  ScaleGravityTransform sg_anchor;
  bool has_sg_anchor = false;
  std::vector<FrameState> frames;  // ordered by timestamp

  FrameState* find_frame(int id) {
    for (auto& f : frames)
      if (f.id == id) return &f;
    return nullptr;
  }
  const FrameState* find_frame(int id) const {
    for (const auto& f : frames)
      if (f.id == id) return &f;
    return nullptr;
  }
};

}  // namespace svio
