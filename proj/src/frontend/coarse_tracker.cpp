#include "svio/frontend/coarse_tracker.hpp"

#include <Eigen/Dense>

#include "svio/optimize/j_rel.hpp"
#include "svio/optimize/window_optimizer.hpp"
#include "svio/vision/photometric.hpp"

namespace svio {

namespace {

// tracker-internal variable id for the reference keyframe pose
constexpr int kRefFrameBase = 1000000;

Vec2 level_px(const Vec2& p, int l) {
  const double s = 1.0 / double(1 << l);
  return Vec2((p.x() + 0.5) * s - 0.5, (p.y() + 0.5) * s - 0.5);
}

}  // namespace

CoarseTracker::CoarseTracker(TrackerConfig cfg, CameraModel cam, Se3 t_imu_cam)
    : cfg_(cfg), cam_(cam), t_imu_cam_(t_imu_cam) {
  prior_ = MarginalizationPrior::make_empty();
}

void CoarseTracker::reinitialize(const FullState& opt_state,
                                 int ref_frame_id) {
  const FrameState* kf = opt_state.find_frame(ref_frame_id);
  if (!kf) throw std::invalid_argument("CoarseTracker: unknown reference");

  ref_id_ = kRefFrameBase + ref_frame_id;
  ref_pyramid_ = kf->pyramid;
  ref_pose_ = kf->t_cam_w;
  ref_affine_ = kf->affine;
  // reference depth map: every active window point projected into the
  // reference keyframe
  ref_points_.clear();
  for (const FrameState& f : opt_state.frames) {
    const Se3 t_ref_f = kf->t_cam_w * f.t_cam_w.inverse();
    for (const HostedPoint& pt : f.points) {
      if (pt.status != HostedPoint::Status::active) continue;
      if (f.id == ref_frame_id) {
        ref_points_.emplace_back(pt.pixel, pt.idepth);
        continue;
      }
      const Reprojection r = reproject(pt.pixel, pt.idepth, t_ref_f, cam_);
      if (r.valid && cam_.in_image(r.pixel, kPatternMargin + 1.0))
        ref_points_.emplace_back(r.pixel, r.idepth);
    }
  }
  sg_ = opt_state.sg;

  prev_id_ = next_frame_id_++;
  prev_t_ = kf->t;
  prev_pose_ = kf->t_cam_w;
  prev_velocity_ = kf->velocity;
  prev_bias_ = kf->bias;
  prev_affine_ = kf->affine;

  // fresh prior: the keyframe pose is pinned, the frame state carries the
  // optimizer's marginal knowledge through fixed reinit weights
  prior_ = MarginalizationPrior::make_empty();
  prior_.layout.add(pose_key(ref_id_));
  prior_.layout.add(pose_key(prev_id_));
  prior_.layout.add(velocity_key(prev_id_));
  prior_.layout.add(bias_key(prev_id_));
  prior_.layout.add(affine_key(prev_id_));
  const int n = prior_.layout.dim();
  prior_.h_star = MatXX::Zero(n, n);
  prior_.b_star = VecX::Zero(n);
  prior_.h_star.block(0, 0, 6, 6) = 1e10 * Mat66::Identity();
  prior_.h_star.block(6, 6, 6, 6) = 1e8 * Mat66::Identity();
  prior_.h_star.block(12, 12, 3, 3) = 1e2 * Mat33::Identity();
  Vec6 bw;
  bw << 1e4, 1e4, 1e4, 1e2, 1e2, 1e2;
  prior_.h_star.block(15, 15, 6, 6) = bw.asDiagonal();
  prior_.h_star.block(21, 21, 2, 2) =
      (Vec2(1e2, 1e0)).asDiagonal();
  prior_.lin_point.emplace(pose_key(ref_id_), StateValue::from_pose(ref_pose_));
  prior_.lin_point.emplace(pose_key(prev_id_),
                           StateValue::from_pose(prev_pose_));
  prior_.lin_point.emplace(
      velocity_key(prev_id_),
      StateValue::from_vector(VarKind::Velocity, prev_velocity_));
  prior_.lin_point.emplace(
      bias_key(prev_id_),
      StateValue::from_vector(VarKind::Bias, prev_bias_.vector()));
  prior_.lin_point.emplace(
      affine_key(prev_id_),
      StateValue::from_vector(VarKind::Affine, prev_affine_.vector()));
  prior_.fej = prior_.lin_point;
}

std::set<VarKey> CoarseTracker::prior_variable_keys() const {
  std::set<VarKey> keys;
  for (const VarKey& k : prior_.layout.keys()) keys.insert(k);
  return keys;
}

TrackResult CoarseTracker::track(const std::shared_ptr<const ImagePyramid>& pyr,
                                 Timestamp t,
                                 std::span<const ImuMeasurement> imu) {
  TrackResult out;
  if (!ready()) return out;

  const int fid = next_frame_id_++;

  // inertial prediction provides the initial guess
  PreintegratedImu preint;
  bool have_imu = imu.size() >= 2;
  if (have_imu) preint = preintegrate(imu, prev_bias_, cfg_.noise, 10.0);

  const ImuState prev_metric = imu_state_from_dso(
      prev_pose_, prev_velocity_, prev_bias_, sg_, t_imu_cam_);
  Se3 guess_pose = prev_pose_;
  Vec3 guess_vel = prev_velocity_;
  if (have_imu) {
    const ImuPrediction pred = predict(prev_metric, preint, cfg_.gravity,
                                       cfg_.bias_limits);
    guess_pose = dso_pose_from_metric(pred.state.pose, sg_, t_imu_cam_);
    guess_vel = dso_velocity_from_metric(pred.state.velocity, sg_);
  }
  if (!guess_pose.translation().allFinite()) {
    out.ok = false;  // tracking lost: even the prediction is unusable
    return out;
  }

  Se3 ref_pose = ref_pose_;
  Se3 pose = guess_pose;
  Vec3 vel = guess_vel;
  ImuBias bias = prev_bias_;
  AffineBrightness aff = prev_affine_;
  Se3 prev_pose = prev_pose_;
  Vec3 prev_vel = prev_velocity_;
  ImuBias prev_bias = prev_bias_;
  AffineBrightness prev_aff = prev_affine_;

  PhotometricSettings st;
  st.huber_gamma = cfg_.huber_gamma;
  st.gradient_weight_c = cfg_.gradient_weight_c;

  const VarKey k_ref = pose_key(ref_id_);
  const VarKey k_pp = pose_key(prev_id_), k_pv = velocity_key(prev_id_),
               k_pb = bias_key(prev_id_), k_pa = affine_key(prev_id_);
  const VarKey k_np = pose_key(fid), k_nv = velocity_key(fid),
               k_nb = bias_key(fid), k_na = affine_key(fid);

  const auto make_values = [&]() {
    ValueMap vals;
    vals.emplace(k_ref, StateValue::from_pose(ref_pose));
    vals.emplace(k_pp, StateValue::from_pose(prev_pose));
    vals.emplace(k_pv, StateValue::from_vector(VarKind::Velocity, prev_vel));
    vals.emplace(k_pb,
                 StateValue::from_vector(VarKind::Bias, prev_bias.vector()));
    vals.emplace(k_pa,
                 StateValue::from_vector(VarKind::Affine, prev_aff.vector()));
    vals.emplace(k_np, StateValue::from_pose(pose));
    vals.emplace(k_nv, StateValue::from_vector(VarKind::Velocity, vel));
    vals.emplace(k_nb, StateValue::from_vector(VarKind::Bias, bias.vector()));
    vals.emplace(k_na,
                 StateValue::from_vector(VarKind::Affine, aff.vector()));
    return vals;
  };

  // photometric term at one level; fills jacobians when sys != nullptr
  const auto photometric = [&](int level, LinearSystem* sys, double* flow,
                               int* count) {
    const CameraModel cam_l = cam_.level(level);
    const Image& host = ref_pyramid_->level(level);
    const Image& target = pyr->level(level);
    double energy = 0.0, flow_sum = 0.0;
    int n = 0;
    for (const auto& [px, idepth] : ref_points_) {
      PhotometricInput in;
      in.host = &host;
      in.target = &target;
      in.cam = cam_l;
      in.pixel = level_px(px, level);
      in.idepth = idepth;
      in.t_host_cam_w = ref_pose;
      in.t_target_cam_w = pose;
      in.aff_host = ref_affine_;
      in.aff_target = aff;
      PhotometricSettings stt = st;
      stt.compute_jacobians = sys != nullptr;
      const PhotometricEval ev = evaluate_photometric(in, stt);
      if (!ev.valid) continue;
      ++n;
      energy += cfg_.lambda_photo * ev.energy;
      if (flow) {
        const Reprojection r =
            reproject(in.pixel, idepth, pose * ref_pose.inverse(), cam_l);
        if (r.valid) flow_sum += (r.pixel - in.pixel).norm() * double(1 << level);
      }
      if (!sys) continue;

      MatXX j(kPatternSize, 14);
      j << ev.j_host, ev.j_target, ev.j_aff_target;
      const VecX w = cfg_.lambda_photo * ev.weight;
      const MatXX hl = j.transpose() * w.asDiagonal() * j;
      const VecX bl = -j.transpose() * w.cwiseProduct(ev.r).matrix();
      const std::vector<std::pair<VarKey, int>> slots = {
          {k_ref, 0}, {k_np, 6}, {k_na, 12}};
      for (const auto& [ka, oa] : slots) {
        sys->add_b(ka, bl.segment(oa, var_dim(ka.kind)));
        for (const auto& [kb, ob] : slots)
          sys->add_h(ka, kb,
                     hl.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
      }
    }
    if (flow && n > 0) *flow = flow_sum / n;
    if (count) *count = n;
    return energy;
  };

  // inertial factor between the previous and the new frame; sg fixed
  const auto inertial = [&](LinearSystem* sys) {
    if (!have_imu) return 0.0;
    const ImuState sa =
        imu_state_from_dso(prev_pose, prev_vel, prev_bias, sg_, t_imu_cam_);
    const ImuState sb = imu_state_from_dso(pose, vel, bias, sg_, t_imu_cam_);
    const InertialFactorEval ev =
        inertial_energy(sa, sb, preint, cfg_.gravity, cfg_.bias_limits);
    if (sys) {
      const JRel ja = compute_j_rel(prev_pose, prev_vel, sg_, t_imu_cam_);
      const JRel jb = compute_j_rel(pose, vel, sg_, t_imu_cam_);
      const Eigen::Matrix<double, 15, 15> jda =
          ev.jacobian_i * ja.full().leftCols<15>();
      const Eigen::Matrix<double, 15, 15> jdb =
          ev.jacobian_j * jb.full().leftCols<15>();
      Eigen::Matrix<double, 15, 30> j;
      j << jda, jdb;
      const Eigen::Matrix<double, 30, 30> hl =
          j.transpose() * ev.information * j;
      const Eigen::Matrix<double, 30, 1> bl =
          -j.transpose() * (ev.information * ev.residual);
      const std::vector<std::pair<VarKey, int>> slots = {
          {k_pp, 0}, {k_pv, 6}, {k_pb, 9}, {k_np, 15}, {k_nv, 21}, {k_nb, 24}};
      for (const auto& [ka, oa] : slots) {
        sys->add_b(ka, bl.segment(oa, var_dim(ka.kind)));
        for (const auto& [kb, ob] : slots)
          sys->add_h(ka, kb,
                     hl.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
      }
    }
    return ev.energy;
  };

  const auto regularizer = [&](LinearSystem* sys) {
    if (sys) {
      Mat22 h = Mat22::Zero();
      h(0, 0) = cfg_.affine_a_weight;
      h(1, 1) = cfg_.affine_b_weight;
      sys->add_h(k_na, k_na, h);
      sys->add_b(k_na, Vec2(-cfg_.affine_a_weight * aff.a,
                            -cfg_.affine_b_weight * aff.b));
    }
    return cfg_.affine_a_weight * aff.a * aff.a +
           cfg_.affine_b_weight * aff.b * aff.b;
  };

  const auto prior_term = [&](LinearSystem* sys) {
    if (prior_.empty()) return 0.0;
    const PriorContribution c = prior_energy(prior_, make_values());
    if (sys) {
      for (const VarKey& ka : prior_.layout.keys()) {
        const int oa = prior_.layout.offset(ka);
        sys->add_b(ka, c.b.segment(oa, var_dim(ka.kind)));
        for (const VarKey& kb : prior_.layout.keys()) {
          const int ob = prior_.layout.offset(kb);
          sys->add_h(ka, kb,
                     c.h.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
        }
      }
    }
    return c.energy;
  };

  const auto make_layout = [&]() {
    VariableLayout layout;
    layout.add(k_ref);
    layout.add(k_pp);
    layout.add(k_pv);
    layout.add(k_pb);
    layout.add(k_pa);
    layout.add(k_np);
    layout.add(k_nv);
    layout.add(k_nb);
    layout.add(k_na);
    return layout;
  };

  const auto apply = [&](const VariableLayout& layout, const VecX& d) {
    ref_pose = boxplus(ref_pose, Vec6(d.segment<6>(layout.offset(k_ref))));
    prev_pose = boxplus(prev_pose, Vec6(d.segment<6>(layout.offset(k_pp))));
    prev_vel += d.segment<3>(layout.offset(k_pv));
    prev_bias = prev_bias + Vec6(d.segment<6>(layout.offset(k_pb)));
    prev_aff.a += d[layout.offset(k_pa)];
    prev_aff.b += d[layout.offset(k_pa) + 1];
    pose = boxplus(pose, Vec6(d.segment<6>(layout.offset(k_np))));
    vel += d.segment<3>(layout.offset(k_nv));
    bias = bias + Vec6(d.segment<6>(layout.offset(k_nb)));
    aff.a += d[layout.offset(k_na)];
    aff.b += d[layout.offset(k_na) + 1];
  };

  const int coarsest =
      std::min({cfg_.pyramid_levels, pyr->num_levels(),
                ref_pyramid_->num_levels()}) - 1;
  for (int level = coarsest; level >= 0; --level) {
    double lm = 1e-4;
    int count = 0;
    double energy =
        photometric(level, nullptr, nullptr, &count) + inertial(nullptr) +
        regularizer(nullptr) + prior_term(nullptr);
    for (int iter = 0; iter < cfg_.iterations_per_level; ++iter) {
      LinearSystem sys;
      sys.layout = make_layout();
      sys.init();
      photometric(level, &sys, nullptr, nullptr);
      inertial(&sys);
      regularizer(&sys);
      prior_term(&sys);
      sys.symmetrize();

      bool stepped = false;
      while (lm < 1e6) {
        bool ok = false;
        const VecX delta = WindowOptimizer::solve_schur(sys, lm, &ok);
        if (!ok || delta.lpNorm<Eigen::Infinity>() < 1e-10) break;

        // trial state
        const Se3 s_ref = ref_pose, s_pp = prev_pose, s_np = pose;
        const Vec3 s_pv = prev_vel, s_nv = vel;
        const ImuBias s_pb = prev_bias, s_nb = bias;
        const AffineBrightness s_pa = prev_aff, s_na = aff;
        apply(sys.layout, delta);
        const double e_t = photometric(level, nullptr, nullptr, nullptr) +
                           inertial(nullptr) + regularizer(nullptr) +
                           prior_term(nullptr);
        if (std::isfinite(e_t) && e_t < energy) {
          energy = e_t;
          lm = std::max(lm * 0.5, 1e-7);
          stepped = true;
          break;
        }
        // revert
        ref_pose = s_ref;
        prev_pose = s_pp;
        pose = s_np;
        prev_vel = s_pv;
        vel = s_nv;
        prev_bias = s_pb;
        bias = s_nb;
        prev_aff = s_pa;
        aff = s_na;
        lm *= 4.0;
      }
      if (!stepped) break;
    }
  }

  // health check at full resolution
  int count0 = 0;
  double flow = 0.0;
  const double e0 = photometric(0, nullptr, &flow, &count0);
  const double mean_energy =
      count0 > 0 ? e0 / (cfg_.lambda_photo * count0) : 1e30;
  if (mean_energy > cfg_.energy_fail_threshold || count0 < 10) {
    // photometric alignment failed: fall back to the inertial prediction
    pose = guess_pose;
    vel = guess_vel;
    bias = prev_bias_;
    aff = prev_affine_;
    out.photometric_degraded = true;
  }

  // marginalize everything except the keyframe pose and the newest frame
  {
    LinearSystem sys;
    sys.layout = make_layout();
    sys.init();
    inertial(&sys);
    // prior contribution
    prior_term(&sys);
    sys.symmetrize();
    const std::set<VarKey> drop = {k_pp, k_pv, k_pb, k_pa};
    prior_ = schur_marginalize(sys, drop, make_values(), prior_.fej);
  }

  prev_id_ = fid;
  prev_t_ = t;
  prev_pose_ = pose;
  prev_velocity_ = vel;
  prev_bias_ = bias;
  prev_affine_ = aff;

  out.ok = true;
  out.t_cam_w = pose;
  out.velocity = vel;
  out.bias = bias;
  out.affine = aff;
  out.mean_energy = mean_energy;
  out.mean_flow_px = flow;
  out.brightness_change = std::abs(aff.a - ref_affine_.a);
  return out;
}

}  // namespace svio
