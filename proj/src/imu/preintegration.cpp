#include "svio/imu/preintegration.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace svio {

void PreintegratedImu::corrected(const ImuBias& bias, Quat* delta_q,
                                 Vec3* delta_v, Vec3* delta_p) const {
  const Vec3 dbg = bias.gyro - bias_lin_.gyro;
  const Vec3 dba = bias.accel - bias_lin_.accel;
  *delta_q = (delta_q_ * so3_exp(dr_dbg_ * dbg)).normalized();
  *delta_v = delta_v_ + dv_dbg_ * dbg + dv_dba_ * dba;
  *delta_p = delta_p_ + dp_dbg_ * dbg + dp_dba_ * dba;
}

Vec2 PreintegratedImu::bias_deviation(const ImuBias& bias) const {
  return Vec2((bias.gyro - bias_lin_.gyro).norm(),
              (bias.accel - bias_lin_.accel).norm());
}

PreintegratedImu preintegrate(std::span<const ImuMeasurement> measurements,
                              const ImuBias& bias, const NoiseConfig& noise,
                              double max_duration) {
  if (measurements.empty())
    throw std::invalid_argument("preintegrate: empty measurement set");
  for (size_t k = 1; k < measurements.size(); ++k) {
    if (measurements[k].t <= measurements[k - 1].t)
      throw std::invalid_argument("preintegrate: non-monotone timestamps");
  }

  PreintegratedImu out;
  out.bias_lin_ = bias;

  Mat1515 phi = Mat1515::Identity();  // accumulated transition, for bias jacs

  const double sg2 = noise.gyro_noise_density * noise.gyro_noise_density;
  const double sa2 = noise.accel_noise_density * noise.accel_noise_density;
  const double swg2 = noise.gyro_bias_walk * noise.gyro_bias_walk;
  const double swa2 = noise.accel_bias_walk * noise.accel_bias_walk;

  for (size_t k = 0; k + 1 < measurements.size(); ++k) {
    const ImuMeasurement& m0 = measurements[k];
    const ImuMeasurement& m1 = measurements[k + 1];
    const double dt = seconds_between(m0.t, m1.t);

    const Vec3 w_mid = 0.5 * (m0.gyro + m1.gyro) - bias.gyro;
    const Vec3 a0 = m0.accel - bias.accel;
    const Vec3 a1 = m1.accel - bias.accel;

    const Mat33 r0 = out.delta_q_.toRotationMatrix();
    const Quat q1 = (out.delta_q_ * so3_exp(w_mid * dt)).normalized();
    const Mat33 r1 = q1.toRotationMatrix();

    const Vec3 acc_mid = 0.5 * (r0 * a0 + r1 * a1);

    // error-state transition, ordering (dp, dtheta, dv, dbg, dba)
    const Mat33 a_theta = so3_exp(w_mid * dt).toRotationMatrix().transpose();
    const Mat33 f_vtheta = -0.5 * dt * (r0 * skew(a0) + r1 * skew(a1) * a_theta);
    const Mat33 f_vbg = 0.5 * dt * dt * r1 * skew(a1);
    const Mat33 f_vba = -0.5 * dt * (r0 + r1);

    Mat1515 f = Mat1515::Identity();
    f.block<3, 3>(0, 3) = 0.5 * dt * f_vtheta;
    f.block<3, 3>(0, 6) = dt * Mat33::Identity();
    f.block<3, 3>(0, 9) = 0.5 * dt * f_vbg;
    f.block<3, 3>(0, 12) = 0.5 * dt * f_vba;
    f.block<3, 3>(3, 3) = a_theta;
    f.block<3, 3>(3, 9) = -dt * Mat33::Identity();
    f.block<3, 3>(6, 3) = f_vtheta;
    f.block<3, 3>(6, 9) = f_vbg;
    f.block<3, 3>(6, 12) = f_vba;

    // noise input (ng0, ng1, na0, na1, wbg, wba), discretized densities
    Eigen::Matrix<double, 15, 18> g = Eigen::Matrix<double, 15, 18>::Zero();
    g.block<3, 3>(3, 0) = -0.5 * dt * Mat33::Identity();
    g.block<3, 3>(3, 3) = -0.5 * dt * Mat33::Identity();
    g.block<3, 3>(6, 0) = 0.25 * dt * dt * r1 * skew(a1);
    g.block<3, 3>(6, 3) = g.block<3, 3>(6, 0);
    g.block<3, 3>(6, 6) = -0.5 * dt * r0;
    g.block<3, 3>(6, 9) = -0.5 * dt * r1;
    g.block<3, 3>(0, 0) = 0.5 * dt * g.block<3, 3>(6, 0);
    g.block<3, 3>(0, 3) = g.block<3, 3>(0, 0);
    g.block<3, 3>(0, 6) = 0.5 * dt * g.block<3, 3>(6, 6);
    g.block<3, 3>(0, 9) = 0.5 * dt * g.block<3, 3>(6, 9);
    g.block<3, 3>(9, 12) = Mat33::Identity();
    g.block<3, 3>(12, 15) = Mat33::Identity();

    Eigen::Matrix<double, 18, 1> q_diag;
    const double wn_g = sg2 / dt;  // white noise, variance per discrete sample
    const double wn_a = sa2 / dt;
    q_diag << wn_g, wn_g, wn_g, wn_g, wn_g, wn_g, wn_a, wn_a, wn_a, wn_a, wn_a,
        wn_a, swg2 * dt, swg2 * dt, swg2 * dt, swa2 * dt, swa2 * dt, swa2 * dt;

    out.cov_ = f * out.cov_ * f.transpose() +
               g * q_diag.asDiagonal() * g.transpose();
    out.cov_ = 0.5 * (out.cov_ + out.cov_.transpose()).eval();
    phi = (f * phi).eval();

    out.delta_p_ += out.delta_v_ * dt + 0.5 * acc_mid * dt * dt;
    out.delta_v_ += acc_mid * dt;
    out.delta_q_ = q1;
    out.dt_ += dt;
  }

  out.dp_dbg_ = phi.block<3, 3>(0, 9);
  out.dp_dba_ = phi.block<3, 3>(0, 12);
  out.dr_dbg_ = phi.block<3, 3>(3, 9);
  out.dv_dbg_ = phi.block<3, 3>(6, 9);
  out.dv_dba_ = phi.block<3, 3>(6, 12);
  out.duration_flagged_ = out.dt_ > max_duration;
  return out;
}

namespace {

// Maps preintegration increment errors (dp, dtheta, dv, dbg, dba) into the
// residual frame of boxminus(s_j, prediction).
Mat1515 residual_noise_map(const Mat33& delta_r_corrected, const Mat33& r_i) {
  Mat1515 a = Mat1515::Identity();
  a.block<3, 3>(0, 0) = delta_r_corrected.transpose();
  a.block<3, 3>(6, 6) = r_i;
  return a;
}

}  // namespace

ImuPrediction predict(const ImuState& s_i, const PreintegratedImu& preint,
                      const Vec3& gravity, const BiasCorrectionLimits& limits) {
  ImuPrediction out;
  const Vec2 dev = preint.bias_deviation(s_i.bias);
  out.bias_out_of_range = dev[0] > limits.max_gyro_deviation ||
                          dev[1] > limits.max_accel_deviation;

  Quat dq;
  Vec3 dv, dp;
  preint.corrected(s_i.bias, &dq, &dv, &dp);

  const double dt = preint.dt();
  const Mat33 r_i = s_i.pose.rotation_matrix();
  const Vec3 u = s_i.velocity * dt + 0.5 * gravity * dt * dt;

  out.state.pose = s_i.pose * Se3(dq, dp + r_i.transpose() * u);
  out.state.velocity = s_i.velocity + gravity * dt + r_i * dv;
  out.state.bias = s_i.bias;

  const Mat1515 a = residual_noise_map(dq.toRotationMatrix(), r_i);
  out.covariance = a * preint.covariance() * a.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

InertialFactorEval inertial_energy(const ImuState& s_i, const ImuState& s_j,
                                   const PreintegratedImu& preint,
                                   const Vec3& gravity,
                                   const BiasCorrectionLimits& limits) {
  InertialFactorEval out;

  Quat dq;
  Vec3 dv, dp;
  preint.corrected(s_i.bias, &dq, &dv, &dp);
  const Mat33 drc = dq.toRotationMatrix();

  const double dt = preint.dt();
  const Mat33 r_i = s_i.pose.rotation_matrix();
  const Vec3 u = s_i.velocity * dt + 0.5 * gravity * dt * dt;
  const Vec3 u_body = r_i.transpose() * u;

  const Se3 d(dq, dp + u_body);
  ImuPrediction pred;
  pred.state.pose = s_i.pose * d;
  pred.state.velocity = s_i.velocity + gravity * dt + r_i * dv;
  pred.state.bias = s_i.bias;
  const Mat1515 a = residual_noise_map(drc, r_i);
  pred.covariance = a * preint.covariance() * a.transpose();
  pred.covariance =
      0.5 * (pred.covariance + pred.covariance.transpose()).eval();
  const Vec2 dev = preint.bias_deviation(s_i.bias);
  pred.bias_out_of_range = dev[0] > limits.max_gyro_deviation ||
                           dev[1] > limits.max_accel_deviation;
  out.prediction = pred.state;
  out.bias_out_of_range = pred.bias_out_of_range;

  out.residual.head<6>() = boxminus(s_j.pose, pred.state.pose);
  out.residual.segment<3>(6) = s_j.velocity - pred.state.velocity;
  out.residual.tail<6>() = s_j.bias.vector() - s_i.bias.vector();

  // information matrix, regularized when badly conditioned
  Mat1515 cov = pred.covariance;
  {
    Eigen::SelfAdjointEigenSolver<Mat1515> es(cov);
    const double emax = es.eigenvalues().maxCoeff();
    const double emin = es.eigenvalues().minCoeff();
    if (!(emin > 0.0) || emax / std::max(emin, 1e-300) > 1e12) {
      cov += 1e-12 * Mat1515::Identity();
      out.covariance_regularized = true;
    }
  }
  out.information = cov.ldlt().solve(Mat1515::Identity());
  out.information =
      0.5 * (out.information + out.information.transpose()).eval();
  if (!out.information.allFinite())
    throw std::runtime_error(
        "inertial_energy: singular covariance after regularization");

  const Vec6 r0 = out.residual.head<6>();
  const Mat66 k = se3_right_jacobian_inv(r0);   // d r / d eps_j
  const Mat66 l = -se3_left_jacobian_inv(r0);   // d r / d prediction perturb

  // prediction perturbation from the tangent of s_i
  Mat66 deta_deps = d.inverse().adjoint();
  deta_deps.topRightCorner<3, 3>() += drc.transpose() * skew(u_body);

  Eigen::Matrix<double, 6, 3> deta_dv = Eigen::Matrix<double, 6, 3>::Zero();
  deta_dv.topRows<3>() = drc.transpose() * r_i.transpose() * dt;

  const Vec3 theta_c = preint.dr_dbg() * (s_i.bias.gyro - preint.linearization_bias().gyro);
  Mat66 deta_db = Mat66::Zero();
  deta_db.block<3, 3>(0, 0) = drc.transpose() * preint.dp_dbg();
  deta_db.block<3, 3>(0, 3) = drc.transpose() * preint.dp_dba();
  deta_db.block<3, 3>(3, 0) = so3_right_jacobian(theta_c) * preint.dr_dbg();

  out.jacobian_i.block<6, 6>(0, 0) = l * deta_deps;
  out.jacobian_i.block<6, 3>(0, 6) = l * deta_dv;
  out.jacobian_i.block<6, 6>(0, 9) = l * deta_db;
  out.jacobian_i.block<3, 3>(6, 3) = r_i * skew(dv);
  out.jacobian_i.block<3, 3>(6, 6) = -Mat33::Identity();
  out.jacobian_i.block<3, 3>(6, 9) = -r_i * preint.dv_dbg();
  out.jacobian_i.block<3, 3>(6, 12) = -r_i * preint.dv_dba();
  out.jacobian_i.block<6, 6>(9, 9) = -Mat66::Identity();

  out.jacobian_j.block<6, 6>(0, 0) = k;
  out.jacobian_j.block<3, 3>(6, 6) = Mat33::Identity();
  out.jacobian_j.block<6, 6>(9, 9) = Mat66::Identity();

  out.energy = out.residual.dot(out.information * out.residual);
  return out;
}

}  // namespace svio
