#pragma once

#include <memory>
#include <set>
#include <span>

#include "svio/imu/preintegration.hpp"
#include "svio/marg/prior.hpp"
#include "svio/optimize/window_state.hpp"

namespace svio {

struct TrackerConfig {
  int pyramid_levels = 4;
  int iterations_per_level = 8;
  double lambda_photo = 1.0;
  double huber_gamma = 9.0;
  double gradient_weight_c = 50.0;
  double energy_fail_threshold = 1200.0;  // mean pattern energy, level 0
  double affine_a_weight = 1e-1;
  double affine_b_weight = 1e-3;
  NoiseConfig noise;
  BiasCorrectionLimits bias_limits;
  Vec3 gravity = Vec3(0.0, 0.0, -kGravityNorm);
};

struct TrackResult {
  bool ok = false;
  bool photometric_degraded = false;  // fell back to the IMU prediction
  Se3 t_cam_w;                        // DSO frame
  Vec3 velocity;                      // DSO frame
  ImuBias bias;
  AffineBrightness affine;
  double mean_energy = 0.0;
  double mean_flow_px = 0.0;
  double brightness_change = 0.0;
};

// Per-frame direct image alignment against the latest keyframe with an
// inertial factor to the previous frame. Geometry and scale stay fixed;
// after each frame everything except the keyframe pose and the newest
// frame's variables is marginalized out.
class CoarseTracker {
 public:
  CoarseTracker(TrackerConfig cfg, CameraModel cam, Se3 t_imu_cam);

  // Adopts the optimizer's newest keyframe as reference and re-seeds the
  // scale/gravity, velocity and bias estimates.
  void reinitialize(const FullState& opt_state, int ref_frame_id);

  bool ready() const { return ref_pyramid_ != nullptr; }

  TrackResult track(const std::shared_ptr<const ImagePyramid>& pyr,
                    Timestamp t, std::span<const ImuMeasurement> imu);

  const ScaleGravityTransform& scale_gravity() const { return sg_; }
  const MarginalizationPrior& prior() const { return prior_; }
  std::set<VarKey> prior_variable_keys() const;
  int reference_id() const { return ref_id_; }

 private:
  TrackerConfig cfg_;
  CameraModel cam_;
  Se3 t_imu_cam_;

  // reference keyframe snapshot
  int ref_id_ = -1;
  std::shared_ptr<const ImagePyramid> ref_pyramid_;
  Se3 ref_pose_;
  AffineBrightness ref_affine_;
  std::vector<std::pair<Vec2, double>> ref_points_;  // pixel + inverse depth

  ScaleGravityTransform sg_;

  // newest tracked frame (becomes "previous" for the next call)
  int prev_id_ = -1;
  Timestamp prev_t_ = 0;
  Se3 prev_pose_;
  Vec3 prev_velocity_ = Vec3::Zero();
  ImuBias prev_bias_;
  AffineBrightness prev_affine_;

  MarginalizationPrior prior_;
  int next_frame_id_ = 0;
};

}  // namespace svio
