#pragma once

#include <span>
#include <vector>

#include "svio/imu/imu_types.hpp"

namespace svio {

// Gravity-free relative motion over one inter-frame interval, summarizing
// all IMU samples in between. Immutable after construction.
class PreintegratedImu {
 public:
  double dt() const { return dt_; }
  const Quat& delta_rotation() const { return delta_q_; }
  const Vec3& delta_velocity() const { return delta_v_; }
  const Vec3& delta_position() const { return delta_p_; }

  // Error-state covariance, ordering (dp, dtheta, dv, dbg, dba).
  const Mat1515& covariance() const { return cov_; }

  const Mat33& dr_dbg() const { return dr_dbg_; }
  const Mat33& dv_dbg() const { return dv_dbg_; }
  const Mat33& dv_dba() const { return dv_dba_; }
  const Mat33& dp_dbg() const { return dp_dbg_; }
  const Mat33& dp_dba() const { return dp_dba_; }

  const ImuBias& linearization_bias() const { return bias_lin_; }
  bool duration_flagged() const { return duration_flagged_; }

  // First-order bias-corrected increments.
  void corrected(const ImuBias& bias, Quat* delta_q, Vec3* delta_v,
                 Vec3* delta_p) const;

  // Deviation of `bias` from the linearization point, (gyro, accel) norms.
  Vec2 bias_deviation(const ImuBias& bias) const;

 private:
  friend PreintegratedImu preintegrate(std::span<const ImuMeasurement>,
                                       const ImuBias&, const NoiseConfig&,
                                       double);
  double dt_ = 0.0;
  Quat delta_q_ = Quat::Identity();
  Vec3 delta_v_ = Vec3::Zero();
  Vec3 delta_p_ = Vec3::Zero();
  Mat1515 cov_ = Mat1515::Zero();
  Mat33 dr_dbg_ = Mat33::Zero();
  Mat33 dv_dbg_ = Mat33::Zero();
  Mat33 dv_dba_ = Mat33::Zero();
  Mat33 dp_dbg_ = Mat33::Zero();
  Mat33 dp_dba_ = Mat33::Zero();
  ImuBias bias_lin_;
  bool duration_flagged_ = false;
};

// Midpoint integration on the manifold over consecutive measurement pairs.
// Throws on an empty span or non-monotone timestamps. Durations above
// `max_duration` are allowed but flagged.
PreintegratedImu preintegrate(std::span<const ImuMeasurement> measurements,
                              const ImuBias& bias, const NoiseConfig& noise,
                              double max_duration = 0.5);

struct BiasCorrectionLimits {
  double max_gyro_deviation = 0.1;   // rad/s
  double max_accel_deviation = 0.2;  // m/s^2
};

struct ImuPrediction {
  ImuState state;
  // Covariance of the residual boxminus(s_j, prediction),
  // ordering (pose[trans, rot], velocity, bias[gyro, accel]).
  Mat1515 covariance;
  bool bias_out_of_range = false;
};

ImuPrediction predict(const ImuState& s_i, const PreintegratedImu& preint,
                      const Vec3& gravity,
                      const BiasCorrectionLimits& limits = {});

struct InertialFactorEval {
  double energy = 0.0;
  Vec15 residual = Vec15::Zero();
  Mat1515 information = Mat1515::Zero();
  Mat1515 jacobian_i = Mat1515::Zero();  // w.r.t. tangent of s_i
  Mat1515 jacobian_j = Mat1515::Zero();  // w.r.t. tangent of s_j
  ImuState prediction;
  bool bias_out_of_range = false;
  bool covariance_regularized = false;
};

// E = r^T Sigma^-1 r with r = boxminus(s_j, prediction(s_i)).
InertialFactorEval inertial_energy(const ImuState& s_i, const ImuState& s_j,
                                   const PreintegratedImu& preint,
                                   const Vec3& gravity,
                                   const BiasCorrectionLimits& limits = {});

}  // namespace svio
