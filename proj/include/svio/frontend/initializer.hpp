#pragma once

#include <memory>

#include "svio/optimize/window_state.hpp"
#include "svio/vision/point_selection.hpp"

namespace svio {

struct InitializerConfig {
  int pyramid_levels = 4;
  int point_count = 150;
  double min_parallax_px = 4.0;  // rotation-compensated, full resolution
  double max_mean_energy = 600.0;
  int iterations_per_level = 12;
  double huber_gamma = 9.0;
  double gradient_weight_c = 50.0;
  double depth_regularizer = 0.05;  // pull toward unit inverse depth
  double rotation_prior_weight = 1e5;  // around the gyro-integrated rotation
};

// Joint direct alignment of a candidate frame against the first frame,
// estimating the relative pose, an affine brightness pair, and per-point
// inverse depths, coarse to fine. Depth estimates persist across attempts
// so parallax can accumulate over several candidate frames.
class TwoFrameInitializer {
 public:
  TwoFrameInitializer(InitializerConfig cfg, CameraModel cam);

  void set_first(std::shared_ptr<const ImagePyramid> pyr, Timestamp t);
  bool has_first() const { return first_ != nullptr; }
  Timestamp first_timestamp() const { return t0_; }
  std::shared_ptr<const ImagePyramid> first_pyramid() const { return first_; }
  void reset();

  struct Attempt {
    bool success = false;
    Se3 t_cam1_cam0;  // second-frame pose with the first camera as world
    AffineBrightness affine1;
    double parallax_px = 0.0;
    double mean_energy = 0.0;
    int valid_points = 0;
    std::vector<std::pair<Vec2, double>> points;  // pixel + inverse depth
  };

  // `rotation_hint`, when given, is the gyro-integrated relative rotation
  // cam1 <- cam0; it anchors the rotation/translation ambiguity on scenes
  // dominated by a single plane.
  Attempt try_frame(const std::shared_ptr<const ImagePyramid>& pyr,
                    Timestamp t, const Quat* rotation_hint = nullptr);

 private:
  InitializerConfig cfg_;
  CameraModel cam_;
  std::shared_ptr<const ImagePyramid> first_;
  Timestamp t0_ = 0;
  std::vector<Vec2> pixels_;
  std::vector<double> idepths_;
  Se3 warm_pose_;
  AffineBrightness warm_affine_;
};

}  // namespace svio
