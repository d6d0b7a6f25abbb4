#pragma once

#include "svio/io/simulator.hpp"
#include "svio/optimize/window_optimizer.hpp"
#include "svio/vision/point_selection.hpp"
#include "test_utils.hpp"

namespace svio::testing {

// Ground-truth-initialized sliding window over a simulated sequence. The
// metric world is the simulator world; the DSO frame is related to it by
// sg_true (pure scale by default).
struct WindowFixture {
  SyntheticSpec spec;
  DatasetSequence seq;
  FullState state;
  WindowFactors factors;
  ScaleGravityTransform sg_true;
  std::vector<Se3> true_dso_poses;  // per frame, world-to-camera

  double relative_pose_error(const FullState& other) const {
    double err = 0.0;
    for (size_t k = 1; k < other.frames.size(); ++k) {
      const Se3 rel_est =
          other.frames[k].t_cam_w * other.frames[0].t_cam_w.inverse();
      const Se3 rel_true = true_dso_poses[k] * true_dso_poses[0].inverse();
      err = std::max(err, se3_distance(rel_est, rel_true));
    }
    return err;
  }
};

inline WindowFixture make_window(int n_frames, double spacing_s,
                                 double s_true, int points_per_frame,
                                 std::uint64_t seed) {
  WindowFixture fx;
  fx.spec.width = 160;
  fx.spec.height = 120;
  fx.spec.fx = fx.spec.fy = 150.0;
  fx.spec.scene_distance = 3.5;
  fx.spec.seed = seed;
  fx.spec.duration = fx.spec.lead_in + fx.spec.ramp + n_frames * spacing_s + 1.0;
  fx.seq = simulate(fx.spec);

  fx.sg_true.q_md = Quat::Identity();
  fx.sg_true.log_scale = std::log(s_true);

  fx.state.cam = fx.seq.cam;
  fx.state.t_imu_cam = fx.seq.t_imu_cam;
  fx.state.sg = fx.sg_true;

  // frames start after the excitation ramp
  const double t0 = fx.spec.lead_in + fx.spec.ramp + 0.2;
  std::vector<size_t> indices;
  for (int k = 0; k < n_frames; ++k) {
    const Timestamp want = from_seconds(t0 + k * spacing_s);
    size_t best = 0;
    for (size_t i = 0; i < fx.seq.frames.size(); ++i)
      if (std::abs(fx.seq.frames[i].t - want) <
          std::abs(fx.seq.frames[best].t - want))
        best = i;
    indices.push_back(best);
  }

  for (int k = 0; k < n_frames; ++k) {
    const size_t idx = indices[size_t(k)];
    const GroundTruthState& gt = fx.seq.ground_truth[idx];

    FrameState f;
    f.id = k;
    f.t = fx.seq.frames[idx].t;
    f.t_cam_w = dso_pose_from_metric(gt.t_w_imu, fx.sg_true, fx.seq.t_imu_cam);
    f.velocity = dso_velocity_from_metric(gt.velocity, fx.sg_true);
    f.pyramid = std::make_shared<ImagePyramid>(fx.seq.load_frame(idx), 4);
    fx.true_dso_poses.push_back(f.t_cam_w);

    const Se3 t_w_cam_metric = gt.t_w_imu * fx.seq.t_imu_cam;
    for (const Vec2& px : select_points(f.image(), points_per_frame)) {
      const double id_metric = true_inverse_depth(fx.spec, t_w_cam_metric, px);
      if (!(id_metric > 0.0)) continue;
      HostedPoint pt;
      pt.pixel = px;
      pt.idepth = s_true * id_metric;  // host-frame inverse depth, DSO units
      pt.obs_count = n_frames - 1;
      f.points.push_back(pt);
    }
    fx.state.frames.push_back(std::move(f));
  }

  for (int k = 0; k + 1 < n_frames; ++k) {
    InertialLink link;
    link.id_a = k;
    link.id_b = k + 1;
    link.raw = fx.seq.imu_slice(fx.state.frames[size_t(k)].t,
                                fx.state.frames[size_t(k) + 1].t);
    link.preint = preintegrate(link.raw, ImuBias{}, fx.seq.noise, 10.0);
    fx.factors.links.push_back(std::move(link));
  }
  return fx;
}

// Strong anchor on the first keyframe plus weak velocity/bias priors,
// mirroring the pipeline's initialization seed.
inline MarginalizationPrior make_seed_prior(const FullState& state,
                                            bool visual_only) {
  MarginalizationPrior p = MarginalizationPrior::make_empty();
  const int id0 = state.frames.front().id;
  p.layout.add(pose_key(id0));
  p.layout.add(affine_key(id0));
  if (!visual_only) {
    p.layout.add(velocity_key(id0));
    p.layout.add(bias_key(id0));
  }
  const int n = p.layout.dim();
  p.h_star = MatXX::Zero(n, n);
  p.b_star = VecX::Zero(n);
  p.h_star.block(0, 0, 6, 6) = 1e8 * Mat66::Identity();
  p.h_star.block(6, 6, 2, 2) = 1e4 * Mat22::Identity();
  if (!visual_only) {
    p.h_star.block(8, 8, 3, 3) = 1.0 * Mat33::Identity();
    Vec6 bw;
    bw << 1e2, 1e2, 1e2, 4.0, 4.0, 4.0;
    p.h_star.block(11, 11, 6, 6) = bw.asDiagonal();
  }
  const FrameState& f0 = state.frames.front();
  p.lin_point.emplace(pose_key(id0), StateValue::from_pose(f0.t_cam_w));
  p.lin_point.emplace(affine_key(id0), StateValue::from_vector(
                                           VarKind::Affine, f0.affine.vector()));
  if (!visual_only) {
    p.lin_point.emplace(velocity_key(id0), StateValue::from_vector(
                                               VarKind::Velocity, f0.velocity));
    p.lin_point.emplace(
        bias_key(id0),
        StateValue::from_vector(VarKind::Bias, f0.bias.vector()));
  }
  p.fej = p.lin_point;
  return p;
}

}  // namespace svio::testing
