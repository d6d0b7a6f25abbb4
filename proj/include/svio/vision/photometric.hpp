#pragma once

#include <array>

#include "svio/vision/camera.hpp"
#include "svio/vision/image.hpp"

namespace svio {

// Residual pattern: center plus seven offsets inside a 5x5 footprint.
constexpr int kPatternSize = 8;
inline const std::array<Vec2, kPatternSize>& pattern_offsets() {
  static const std::array<Vec2, kPatternSize> offsets = {
      Vec2(0, -2), Vec2(-1, -1), Vec2(1, -1), Vec2(-2, 0),
      Vec2(0, 0),  Vec2(2, 0),   Vec2(-1, 1), Vec2(0, 2)};
  return offsets;
}
constexpr double kPatternMargin = 3.0;  // pattern extent + interpolation cell

// Huber energy: r^2 inside the threshold, gamma*(2|r|-gamma) outside.
inline double huber_energy(double r, double gamma) {
  const double a = std::abs(r);
  return a <= gamma ? r * r : gamma * (2.0 * a - gamma);
}

inline double huber_weight(double r, double gamma) {
  const double a = std::abs(r);
  return a <= gamma ? 1.0 : gamma / a;
}

// Gradient-dependent down-weighting of high-gradient pixels.
inline double gradient_weight(double grad_sq, double c) {
  return c * c / (c * c + grad_sq);
}

struct AffineBrightness {
  double a = 0.0;  // log gain
  double b = 0.0;  // offset, intensity units

  Vec2 vector() const { return Vec2(a, b); }
  static AffineBrightness from_vector(const Vec2& v) { return {v[0], v[1]}; }
};

struct PhotometricSettings {
  double huber_gamma = 9.0;
  double gradient_weight_c = 50.0;
  bool use_fej = false;
  bool compute_jacobians = true;
  bool compute_intrinsic_jacobians = false;
};

struct PhotometricInput {
  const Image* host = nullptr;
  const Image* target = nullptr;
  CameraModel cam;
  Vec2 pixel = Vec2::Zero();  // point location in the host image
  double idepth = 0.0;

  Se3 t_host_cam_w;  // world-to-camera poses in the DSO frame
  Se3 t_target_cam_w;
  AffineBrightness aff_host, aff_target;

  // First-estimate evaluation points for the geometric jacobian chain.
  Se3 t_host_fej, t_target_fej;
  double idepth_fej = 0.0;
};

struct PhotometricEval {
  bool valid = false;
  bool behind_camera = false;
  bool out_of_bounds = false;
  double energy = 0.0;  // sum_k omega_k * huber(r_k)

  Eigen::Matrix<double, kPatternSize, 1> r;
  Eigen::Matrix<double, kPatternSize, 1> weight;  // omega_k * huber_w(r_k)
  Eigen::Matrix<double, kPatternSize, 1> omega;
  Eigen::Matrix<double, kPatternSize, 6> j_host;
  Eigen::Matrix<double, kPatternSize, 6> j_target;
  Eigen::Matrix<double, kPatternSize, 1> j_idepth;
  Eigen::Matrix<double, kPatternSize, 2> j_aff_host;    // (a_i, b_i)
  Eigen::Matrix<double, kPatternSize, 2> j_aff_target;  // (a_j, b_j)
  Eigen::Matrix<double, kPatternSize, 4> j_intrinsics;  // (fx, fy, cx, cy)
};

// One point observed in one target frame: Huber-robustified pattern residual
// with jacobians w.r.t. both poses, inverse depth, both affine pairs and
// optionally the intrinsics. Drops the residual when any pattern pixel
// leaves the target image or lands behind the camera.
PhotometricEval evaluate_photometric(const PhotometricInput& in,
                                     const PhotometricSettings& st);

}  // namespace svio
