#include "svio/optimize/j_rel.hpp"

namespace svio {

ImuState imu_state_from_dso(const Se3& t_cam_w_dso, const Vec3& vel_dso,
                            const ImuBias& bias, const ScaleGravityTransform& sg,
                            const Se3& t_imu_cam) {
  const Sim3 s = sg.as_sim3() * Sim3::from_se3(t_cam_w_dso.inverse());
  ImuState out;
  out.pose = s.strip_scale() * t_imu_cam.inverse();
  out.velocity = sg.scale() * (sg.q_md * vel_dso);
  out.bias = bias;
  return out;
}

Se3 dso_pose_from_metric(const Se3& t_w_imu_metric,
                         const ScaleGravityTransform& sg,
                         const Se3& t_imu_cam) {
  const Se3 w = t_w_imu_metric * t_imu_cam;  // strip(T_md * (T^D_cam_w)^-1)
  const Sim3 s(w.rotation(), w.translation(), sg.scale());
  return (s.inverse() * sg.as_sim3()).strip_scale();
}

Vec3 dso_velocity_from_metric(const Vec3& vel_metric,
                              const ScaleGravityTransform& sg) {
  return (sg.q_md.conjugate() * vel_metric) / sg.scale();
}

JRel compute_j_rel(const Se3& t_cam_w_dso, const Vec3& vel_dso,
                   const ScaleGravityTransform& sg, const Se3& t_imu_cam) {
  const double s = sg.scale();
  const Mat33 r_md = sg.q_md.toRotationMatrix();

  // chain: T^M = strip(T_md * (T^D)^-1) * T_cam_imu with T_cam_imu fixed.
  // Right perturbations of T^D and of T_md both enter through the sim(3)
  // adjoint of T^D; the strip drops the scale row and multiplies the
  // translation rows by the group scale.
  const Mat77 adj_d = Sim3::from_se3(t_cam_w_dso).adjoint();
  Eigen::Matrix<double, 6, 7> strip_jac = Eigen::Matrix<double, 6, 7>::Zero();
  strip_jac.block<3, 3>(0, 0) = s * Mat33::Identity();
  strip_jac.block<3, 3>(3, 3) = Mat33::Identity();
  const Mat66 adj_ci_inv = t_imu_cam.adjoint();  // Adj(T_cam_imu^-1)
  const Eigen::Matrix<double, 6, 7> m = adj_ci_inv * strip_jac * adj_d;

  JRel j;
  j.pose_pose = -m.leftCols<6>();
  j.pose_sg = m.rightCols<4>();
  j.vel_vel = s * r_md;
  j.vel_sg.leftCols<3>() = -s * r_md * skew(vel_dso);
  j.vel_sg.col(3) = s * (r_md * vel_dso);
  return j;
}

}  // namespace svio
