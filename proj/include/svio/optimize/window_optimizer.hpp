#pragma once

#include "svio/imu/preintegration.hpp"
#include "svio/marg/prior.hpp"
#include "svio/optimize/j_rel.hpp"
#include "svio/optimize/linear_system.hpp"
#include "svio/optimize/window_state.hpp"

namespace svio {

struct OptimizerConfig {
  double lambda_photo = 1.0;  // balance weight on the photometric term
  int window_size = 7;
  int max_iterations = 6;
  double lm_initial = 1e-4;
  double lm_min = 1e-7;
  double lm_max = 1e5;
  double min_delta_norm = 1e-8;
  double huber_gamma = 9.0;
  double gradient_weight_c = 50.0;
  int point_count = 120;
  bool optimize_intrinsics = false;
  bool optimize_depths = true;
  double affine_a_weight = 1e-1;  // anchored affine regularizers (gauge)
  double affine_b_weight = 1e-3;
  double sg_rot_anchor_weight = 10.0;
  double sg_scale_anchor_weight = 1.0;
  double outlier_energy = 800.0;  // mean pattern energy per observation
  int min_obs_mature = 3;
  int divergence_window = 5;
  BiasCorrectionLimits bias_limits;
  NoiseConfig noise;
  Vec3 gravity = Vec3(0.0, 0.0, -kGravityNorm);
};

// One preintegrated IMU factor between two keyframes. Raw measurements are
// kept so the factor can be re-preintegrated when the linearization bias
// drifts out of the first-order correction range.
struct InertialLink {
  int id_a = -1, id_b = -1;
  PreintegratedImu preint;
  std::vector<ImuMeasurement> raw;
};

struct WindowFactors {
  std::vector<InertialLink> links;
};

struct OptimizeReport {
  int iterations = 0;
  int accepted = 0;
  std::vector<double> energy_history;  // accepted energies
  double initial_energy = 0.0;
  double final_energy = 0.0;
  bool converged = false;
  bool diverged = false;
  bool solver_failed = false;
};

class WindowOptimizer {
 public:
  explicit WindowOptimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) {}

  const OptimizerConfig& config() const { return cfg_; }
  OptimizerConfig& config() { return cfg_; }

  VariableLayout make_layout(const FullState& state, bool with_points) const;

  // H = J^T W J and b = -J^T W r of the photometric term over the full
  // window layout; rows never touch the scale/gravity, velocity or bias
  // blocks. The configured lambda is folded into W.
  LinearSystem build_photometric_system(const FullState& state,
                                        const ValueMap* fej = nullptr) const;

  // Inertial term assembled in IMU-state space and mapped through J_rel.
  LinearSystem build_inertial_system(const FullState& state,
                                     const WindowFactors& factors,
                                     const ValueMap* fej = nullptr) const;

  LinearSystem build_full_system(const FullState& state,
                                 const WindowFactors& factors,
                                 const MarginalizationPrior* prior) const;

  double total_photometric_energy(const FullState& state) const;
  double total_energy(const FullState& state, const WindowFactors& factors,
                      const MarginalizationPrior* prior) const;

  // Solves (H + lm diag(H)) delta = b, eliminating inverse depths first.
  static VecX solve_schur(const LinearSystem& sys, double lm, bool* ok);
  // Direct dense solve of the same damped system (reference path).
  static VecX solve_full(const LinearSystem& sys, double lm, bool* ok);

  static void apply_step(FullState& state, const VariableLayout& layout,
                         const VecX& delta);

  // Re-preintegrates links whose stored bias linearization point is out of
  // first-order range of the current estimate.
  void refresh_preintegrations(const FullState& state,
                               WindowFactors& factors) const;

  OptimizeReport optimize(FullState& state, WindowFactors& factors,
                          const MarginalizationPrior* prior) const;

  // Factor bundles for a keyframe marginalization event.
  LinearSystem linearize_visual_for_marg(const FullState& state, int frame_id,
                                         const ValueMap& fej) const;
  LinearSystem linearize_metric_for_marg(const FullState& state,
                                         const WindowFactors& factors,
                                         int frame_id,
                                         const ValueMap& fej) const;

  ValueMap snapshot_values(const FullState& state,
                           bool with_points = false) const;

  void update_point_stats(FullState& state) const;
  int cull_outliers(FullState& state) const;

 private:
  void accumulate_photometric(LinearSystem& sys, const FullState& state,
                              const ValueMap* fej, bool jacobians) const;
  void accumulate_inertial(LinearSystem& sys, const FullState& state,
                           const WindowFactors& factors,
                           const ValueMap* fej) const;
  void accumulate_regularizers(LinearSystem& sys, const FullState& state) const;
  void accumulate_prior(LinearSystem& sys, const MarginalizationPrior& prior,
                        const FullState& state) const;
  double regularizer_energy(const FullState& state) const;

  OptimizerConfig cfg_;
};

}  // namespace svio
