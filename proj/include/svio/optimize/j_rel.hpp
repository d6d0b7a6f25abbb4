#pragma once

#include "svio/optimize/window_state.hpp"

namespace svio {

// Metric-frame IMU state from the DSO-frame camera state:
//   T^M_w_imu = strip_scale(T_md * (T^D_cam_w)^-1) * T_imu_cam^-1
//   v^M       = s * R_md * v^D
ImuState imu_state_from_dso(const Se3& t_cam_w_dso, const Vec3& vel_dso,
                            const ImuBias& bias, const ScaleGravityTransform& sg,
                            const Se3& t_imu_cam);

inline ImuState imu_state_from_dso(const FrameState& f,
                                   const ScaleGravityTransform& sg,
                                   const Se3& t_imu_cam) {
  return imu_state_from_dso(f.t_cam_w, f.velocity, f.bias, sg, t_imu_cam);
}

// Inverse of the pose/velocity mapping above.
Se3 dso_pose_from_metric(const Se3& t_w_imu_metric,
                         const ScaleGravityTransform& sg,
                         const Se3& t_imu_cam);
Vec3 dso_velocity_from_metric(const Vec3& vel_metric,
                              const ScaleGravityTransform& sg);

// Jacobian of the metric IMU state w.r.t. the DSO-state tangent and the
// scale/gravity tangent. Bias passes through with identity blocks.
struct JRel {
  Mat66 pose_pose = Mat66::Zero();
  Eigen::Matrix<double, 6, 4> pose_sg = Eigen::Matrix<double, 6, 4>::Zero();
  Mat33 vel_vel = Mat33::Zero();
  Eigen::Matrix<double, 3, 4> vel_sg = Eigen::Matrix<double, 3, 4>::Zero();

  // rows: metric (pose, vel, bias); cols: dso (pose, vel, bias) + sg
  Eigen::Matrix<double, 15, 19> full() const {
    Eigen::Matrix<double, 15, 19> j = Eigen::Matrix<double, 15, 19>::Zero();
    j.block<6, 6>(0, 0) = pose_pose;
    j.block<6, 4>(0, 15) = pose_sg;
    j.block<3, 3>(6, 6) = vel_vel;
    j.block<3, 4>(6, 15) = vel_sg;
    j.block<6, 6>(9, 9) = Mat66::Identity();
    return j;
  }
};

JRel compute_j_rel(const Se3& t_cam_w_dso, const Vec3& vel_dso,
                   const ScaleGravityTransform& sg, const Se3& t_imu_cam);

}  // namespace svio
