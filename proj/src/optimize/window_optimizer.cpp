#include "svio/optimize/window_optimizer.hpp"

#include <Eigen/Dense>

#include <algorithm>

namespace svio {

namespace {

Se3 fej_pose(const ValueMap* fej, int frame, const Se3& current) {
  if (!fej) return current;
  auto it = fej->find(pose_key(frame));
  return it != fej->end() ? it->second.pose() : current;
}

Vec3 fej_velocity(const ValueMap* fej, int frame, const Vec3& current) {
  if (!fej) return current;
  auto it = fej->find(velocity_key(frame));
  return it != fej->end() ? Vec3(it->second.vec()) : current;
}

ScaleGravityTransform fej_sg(const ValueMap* fej,
                             const ScaleGravityTransform& current) {
  if (!fej) return current;
  auto it = fej->find(sg_key());
  return it != fej->end() ? ScaleGravityTransform::from_value(it->second)
                          : current;
}

}  // namespace

VariableLayout WindowOptimizer::make_layout(const FullState& state,
                                            bool with_points) const {
  VariableLayout layout;
  layout.add(sg_key());
  for (const FrameState& f : state.frames) {
    layout.add(pose_key(f.id));
    layout.add(velocity_key(f.id));
    layout.add(bias_key(f.id));
    layout.add(affine_key(f.id));
  }
  if (cfg_.optimize_intrinsics) layout.add(intrinsics_key());
  if (with_points && cfg_.optimize_depths) {
    for (const FrameState& f : state.frames) {
      for (size_t i = 0; i < f.points.size(); ++i) {
        if (f.points[i].status == HostedPoint::Status::active)
          layout.add(idepth_key(f.id, int(i)));
      }
    }
  }
  return layout;
}

void WindowOptimizer::accumulate_photometric(LinearSystem& sys,
                                             const FullState& state,
                                             const ValueMap* fej,
                                             bool jacobians) const {
  PhotometricSettings st;
  st.huber_gamma = cfg_.huber_gamma;
  st.gradient_weight_c = cfg_.gradient_weight_c;
  st.compute_jacobians = jacobians;
  st.compute_intrinsic_jacobians = jacobians && cfg_.optimize_intrinsics;

  const double lambda = cfg_.lambda_photo;

  for (const FrameState& host : state.frames) {
    const Se3 host_fej = fej_pose(fej, host.id, host.t_cam_w);
    for (size_t pi = 0; pi < host.points.size(); ++pi) {
      const HostedPoint& pt = host.points[pi];
      if (pt.status != HostedPoint::Status::active) continue;
      const VarKey pt_key = idepth_key(host.id, int(pi));
      for (const FrameState& target : state.frames) {
        if (target.id == host.id) continue;

        PhotometricInput in;
        in.host = &host.image();
        in.target = &target.image();
        in.cam = state.cam;
        in.pixel = pt.pixel;
        in.idepth = pt.idepth;
        in.t_host_cam_w = host.t_cam_w;
        in.t_target_cam_w = target.t_cam_w;
        in.aff_host = host.affine;
        in.aff_target = target.affine;
        in.t_host_fej = host_fej;
        in.t_target_fej = fej_pose(fej, target.id, target.t_cam_w);
        in.idepth_fej = pt.idepth;
        PhotometricSettings stt = st;
        stt.use_fej = fej != nullptr;

        const PhotometricEval ev = evaluate_photometric(in, stt);
        if (!ev.valid) continue;

        sys.energy += lambda * ev.energy;
        if (!jacobians) continue;

        constexpr int kCols = 17;
        Eigen::Matrix<double, kPatternSize, kCols + 4> j;
        j.setZero();
        j.block<kPatternSize, 6>(0, 0) = ev.j_host;
        j.block<kPatternSize, 6>(0, 6) = ev.j_target;
        j.block<kPatternSize, 2>(0, 12) = ev.j_aff_host;
        j.block<kPatternSize, 2>(0, 14) = ev.j_aff_target;
        j.col(16) = ev.j_idepth;
        int cols = kCols;
        if (cfg_.optimize_intrinsics) {
          j.block<kPatternSize, 4>(0, kCols) = ev.j_intrinsics;
          cols += 4;
        }

        const Eigen::Matrix<double, kPatternSize, 1> w = lambda * ev.weight;
        const MatXX h_local =
            j.leftCols(cols).transpose() * w.asDiagonal() * j.leftCols(cols);
        const VecX b_local =
            -j.leftCols(cols).transpose() * w.cwiseProduct(ev.r).matrix();

        std::vector<std::pair<VarKey, int>> slots = {
            {pose_key(host.id), 0},   {pose_key(target.id), 6},
            {affine_key(host.id), 12}, {affine_key(target.id), 14}};
        if (cfg_.optimize_depths) slots.push_back({pt_key, 16});
        if (cfg_.optimize_intrinsics) slots.push_back({intrinsics_key(), 17});

        for (const auto& [ka, oa] : slots) {
          sys.add_b(ka, b_local.segment(oa, var_dim(ka.kind)));
          for (const auto& [kb, ob] : slots) {
            sys.add_h(ka, kb, h_local.block(oa, ob, var_dim(ka.kind),
                                            var_dim(kb.kind)));
          }
        }
      }
    }
  }
}

void WindowOptimizer::accumulate_inertial(LinearSystem& sys,
                                          const FullState& state,
                                          const WindowFactors& factors,
                                          const ValueMap* fej) const {
  const ScaleGravityTransform sg0 = fej_sg(fej, state.sg);

  for (const InertialLink& link : factors.links) {
    const FrameState* fa = state.find_frame(link.id_a);
    const FrameState* fb = state.find_frame(link.id_b);
    if (!fa || !fb) continue;

    const ImuState sa = imu_state_from_dso(*fa, state.sg, state.t_imu_cam);
    const ImuState sb = imu_state_from_dso(*fb, state.sg, state.t_imu_cam);
    const InertialFactorEval ev =
        inertial_energy(sa, sb, link.preint, cfg_.gravity, cfg_.bias_limits);

    const JRel ja = compute_j_rel(fej_pose(fej, fa->id, fa->t_cam_w),
                                  fej_velocity(fej, fa->id, fa->velocity), sg0,
                                  state.t_imu_cam);
    const JRel jb = compute_j_rel(fej_pose(fej, fb->id, fb->t_cam_w),
                                  fej_velocity(fej, fb->id, fb->velocity), sg0,
                                  state.t_imu_cam);

    const Eigen::Matrix<double, 15, 19> jda = ev.jacobian_i * ja.full();
    const Eigen::Matrix<double, 15, 19> jdb = ev.jacobian_j * jb.full();

    Eigen::Matrix<double, 15, 34> j = Eigen::Matrix<double, 15, 34>::Zero();
    j.block<15, 15>(0, 0) = jda.leftCols<15>();
    j.block<15, 15>(0, 15) = jdb.leftCols<15>();
    j.block<15, 4>(0, 30) = jda.rightCols<4>() + jdb.rightCols<4>();

    const Eigen::Matrix<double, 34, 34> h_local =
        j.transpose() * ev.information * j;
    const Eigen::Matrix<double, 34, 1> b_local =
        -j.transpose() * (ev.information * ev.residual);

    const std::vector<std::pair<VarKey, int>> slots = {
        {pose_key(fa->id), 0},      {velocity_key(fa->id), 6},
        {bias_key(fa->id), 9},      {pose_key(fb->id), 15},
        {velocity_key(fb->id), 21}, {bias_key(fb->id), 24},
        {sg_key(), 30}};
    for (const auto& [ka, oa] : slots) {
      sys.add_b(ka, b_local.segment(oa, var_dim(ka.kind)));
      for (const auto& [kb, ob] : slots) {
        sys.add_h(ka, kb,
                  h_local.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
      }
    }
    sys.energy += ev.energy;
  }
}

void WindowOptimizer::accumulate_regularizers(LinearSystem& sys,
                                              const FullState& state) const {
  if (state.has_sg_anchor) {
    const Vec3 r = so3_log(state.sg_anchor.q_md.conjugate() * state.sg.q_md);
    const double ds = state.sg.log_scale - state.sg_anchor.log_scale;
    Mat44 h = Mat44::Zero();
    h.topLeftCorner<3, 3>() = cfg_.sg_rot_anchor_weight * Mat33::Identity();
    h(3, 3) = cfg_.sg_scale_anchor_weight;
    sys.add_h(sg_key(), sg_key(), h);
    Vec4 b;
    b.head<3>() = -cfg_.sg_rot_anchor_weight * r;
    b[3] = -cfg_.sg_scale_anchor_weight * ds;
    sys.add_b(sg_key(), b);
    sys.energy += cfg_.sg_rot_anchor_weight * r.squaredNorm() +
                  cfg_.sg_scale_anchor_weight * ds * ds;
  }
  for (const FrameState& f : state.frames) {
    const VarKey k = affine_key(f.id);
    Mat22 h = Mat22::Zero();
    h(0, 0) = cfg_.affine_a_weight;
    h(1, 1) = cfg_.affine_b_weight;
    sys.add_h(k, k, h);
    sys.add_b(k, Vec2(-cfg_.affine_a_weight * f.affine.a,
                      -cfg_.affine_b_weight * f.affine.b));
    sys.energy += cfg_.affine_a_weight * f.affine.a * f.affine.a +
                  cfg_.affine_b_weight * f.affine.b * f.affine.b;
  }
}

double WindowOptimizer::regularizer_energy(const FullState& state) const {
  double e = 0.0;
  if (state.has_sg_anchor) {
    const Vec3 r = so3_log(state.sg_anchor.q_md.conjugate() * state.sg.q_md);
    const double ds = state.sg.log_scale - state.sg_anchor.log_scale;
    e += cfg_.sg_rot_anchor_weight * r.squaredNorm() +
         cfg_.sg_scale_anchor_weight * ds * ds;
  }
  for (const FrameState& f : state.frames) {
    e += cfg_.affine_a_weight * f.affine.a * f.affine.a +
         cfg_.affine_b_weight * f.affine.b * f.affine.b;
  }
  return e;
}

ValueMap WindowOptimizer::snapshot_values(const FullState& state,
                                          bool with_points) const {
  ValueMap values;
  values.emplace(sg_key(), state.sg.value());
  for (const FrameState& f : state.frames) {
    values.emplace(pose_key(f.id), StateValue::from_pose(f.t_cam_w));
    values.emplace(velocity_key(f.id),
                   StateValue::from_vector(VarKind::Velocity, f.velocity));
    values.emplace(bias_key(f.id),
                   StateValue::from_vector(VarKind::Bias, f.bias.vector()));
    values.emplace(affine_key(f.id), StateValue::from_vector(
                                         VarKind::Affine, f.affine.vector()));
    if (with_points) {
      for (size_t i = 0; i < f.points.size(); ++i) {
        if (f.points[i].status != HostedPoint::Status::active) continue;
        VecX v(1);
        v[0] = f.points[i].idepth;
        values.emplace(idepth_key(f.id, int(i)),
                       StateValue::from_vector(VarKind::Idepth, v));
      }
    }
  }
  if (cfg_.optimize_intrinsics) {
    VecX c(4);
    c << state.cam.fx, state.cam.fy, state.cam.cx, state.cam.cy;
    values.emplace(intrinsics_key(),
                   StateValue::from_vector(VarKind::Intrinsics, c));
  }
  return values;
}

void WindowOptimizer::accumulate_prior(LinearSystem& sys,
                                       const MarginalizationPrior& prior,
                                       const FullState& state) const {
  if (prior.empty()) return;
  const ValueMap values = snapshot_values(state);
  const PriorContribution c = prior_energy(prior, values);
  for (const VarKey& ka : prior.layout.keys()) {
    const int oa = prior.layout.offset(ka);
    sys.add_b(ka, c.b.segment(oa, var_dim(ka.kind)));
    for (const VarKey& kb : prior.layout.keys()) {
      const int ob = prior.layout.offset(kb);
      sys.add_h(ka, kb, c.h.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
    }
  }
  sys.energy += c.energy;
}

LinearSystem WindowOptimizer::build_photometric_system(
    const FullState& state, const ValueMap* fej) const {
  LinearSystem sys;
  sys.layout = make_layout(state, true);
  sys.init();
  accumulate_photometric(sys, state, fej, true);
  sys.symmetrize();
  return sys;
}

LinearSystem WindowOptimizer::build_inertial_system(const FullState& state,
                                                    const WindowFactors& factors,
                                                    const ValueMap* fej) const {
  LinearSystem sys;
  sys.layout = make_layout(state, false);
  sys.init();
  accumulate_inertial(sys, state, factors, fej);
  sys.symmetrize();
  return sys;
}

LinearSystem WindowOptimizer::build_full_system(
    const FullState& state, const WindowFactors& factors,
    const MarginalizationPrior* prior) const {
  LinearSystem sys;
  sys.layout = make_layout(state, true);
  if (prior) {
    for (const VarKey& k : prior->layout.keys()) sys.layout.add(k);
  }
  sys.init();
  const ValueMap* fej = prior && !prior->fej.empty() ? &prior->fej : nullptr;
  accumulate_photometric(sys, state, fej, true);
  accumulate_inertial(sys, state, factors, fej);
  accumulate_regularizers(sys, state);
  if (prior) accumulate_prior(sys, *prior, state);
  sys.symmetrize();
  return sys;
}

double WindowOptimizer::total_photometric_energy(const FullState& state) const {
  LinearSystem sys;
  sys.layout = make_layout(state, false);
  sys.init();
  accumulate_photometric(sys, state, nullptr, false);
  return sys.energy / std::max(cfg_.lambda_photo, 1e-300);
}

double WindowOptimizer::total_energy(const FullState& state,
                                     const WindowFactors& factors,
                                     const MarginalizationPrior* prior) const {
  LinearSystem sys;
  sys.layout = make_layout(state, false);
  sys.init();
  accumulate_photometric(sys, state, nullptr, false);
  double e = sys.energy;

  for (const InertialLink& link : factors.links) {
    const FrameState* fa = state.find_frame(link.id_a);
    const FrameState* fb = state.find_frame(link.id_b);
    if (!fa || !fb) continue;
    const ImuState sa = imu_state_from_dso(*fa, state.sg, state.t_imu_cam);
    const ImuState sb = imu_state_from_dso(*fb, state.sg, state.t_imu_cam);
    e += inertial_energy(sa, sb, link.preint, cfg_.gravity, cfg_.bias_limits)
             .energy;
  }
  e += regularizer_energy(state);
  if (prior && !prior->empty())
    e += prior_energy(*prior, snapshot_values(state)).energy;
  return e;
}

namespace {

struct Partition {
  std::vector<int> x_idx, p_idx;  // scalar indices
};

Partition partition_layout(const VariableLayout& layout) {
  Partition p;
  for (const VarKey& k : layout.keys()) {
    const int o = layout.offset(k);
    for (int i = 0; i < var_dim(k.kind); ++i) {
      (k.kind == VarKind::Idepth ? p.p_idx : p.x_idx).push_back(o + i);
    }
  }
  return p;
}

}  // namespace

namespace {

// Jacobi equilibration: solve (D H D) y = D b with delta = D y. Keeps the
// conditioning of the mixed pose/affine/depth system manageable.
VecX jacobi_scale(const MatXX& h) {
  return h.diagonal().cwiseMax(1e-12).cwiseSqrt().cwiseInverse();
}

}  // namespace

VecX WindowOptimizer::solve_schur(const LinearSystem& sys, double lm,
                                  bool* ok) {
  const Partition part = partition_layout(sys.layout);
  const int nx = int(part.x_idx.size());
  const int np = int(part.p_idx.size());

  const VecX scale = jacobi_scale(sys.h);

  MatXX h_xx(nx, nx), h_xp(nx, np);
  VecX b_x(nx), b_p(np), d_p(np);
  for (int r = 0; r < nx; ++r) {
    const int ri = part.x_idx[r];
    b_x[r] = scale[ri] * sys.b[ri];
    for (int c = 0; c < nx; ++c) {
      const int ci = part.x_idx[c];
      h_xx(r, c) = scale[ri] * sys.h(ri, ci) * scale[ci];
    }
    for (int c = 0; c < np; ++c) {
      const int ci = part.p_idx[c];
      h_xp(r, c) = scale[ri] * sys.h(ri, ci) * scale[ci];
    }
  }
  for (int r = 0; r < np; ++r) {
    const int ri = part.p_idx[r];
    b_p[r] = scale[ri] * sys.b[ri];
    d_p[r] = scale[ri] * sys.h(ri, ri) * scale[ri];
  }

  // unit diagonal after scaling; damping becomes a plain ridge
  h_xx.diagonal().array() += lm + 1e-14;
  d_p = (d_p.array() + lm + 1e-14).matrix().cwiseMax(1e-12);

  const VecX d_inv = d_p.cwiseInverse();
  const MatXX h_red = h_xx - h_xp * d_inv.asDiagonal() * h_xp.transpose();
  const VecX b_red = b_x - h_xp * d_inv.cwiseProduct(b_p).matrix();

  Eigen::LDLT<MatXX> ldlt(0.5 * (h_red + h_red.transpose()));
  VecX dx = ldlt.solve(b_red);
  VecX dp = d_inv.cwiseProduct(b_p - h_xp.transpose() * dx);

  VecX delta = VecX::Zero(sys.layout.dim());
  bool fine = ldlt.info() == Eigen::Success && dx.allFinite() && dp.allFinite();
  if (fine) {
    for (int r = 0; r < nx; ++r)
      delta[part.x_idx[r]] = scale[part.x_idx[r]] * dx[r];
    for (int r = 0; r < np; ++r)
      delta[part.p_idx[r]] = scale[part.p_idx[r]] * dp[r];
  }
  if (ok) *ok = fine;
  return delta;
}

VecX WindowOptimizer::solve_full(const LinearSystem& sys, double lm, bool* ok) {
  const VecX scale = jacobi_scale(sys.h);
  MatXX h = scale.asDiagonal() * sys.h * scale.asDiagonal();
  VecX b = scale.cwiseProduct(sys.b);
  h.diagonal().array() += lm + 1e-14;
  Eigen::LDLT<MatXX> ldlt(0.5 * (h + h.transpose()));
  VecX delta = ldlt.solve(b);
  const bool fine = ldlt.info() == Eigen::Success && delta.allFinite();
  if (!fine)
    delta.setZero();
  else
    delta = scale.cwiseProduct(delta).eval();
  if (ok) *ok = fine;
  return delta;
}

void WindowOptimizer::apply_step(FullState& state,
                                 const VariableLayout& layout,
                                 const VecX& delta) {
  for (const VarKey& k : layout.keys()) {
    const int o = layout.offset(k);
    switch (k.kind) {
      case VarKind::ScaleGravity:
        state.sg.box_plus(delta.segment<4>(o));
        break;
      case VarKind::Pose: {
        FrameState* f = state.find_frame(k.frame);
        if (f) f->t_cam_w = boxplus(f->t_cam_w, Vec6(delta.segment<6>(o)));
        break;
      }
      case VarKind::Velocity: {
        FrameState* f = state.find_frame(k.frame);
        if (f) f->velocity += delta.segment<3>(o);
        break;
      }
      case VarKind::Bias: {
        FrameState* f = state.find_frame(k.frame);
        if (f) f->bias = f->bias + Vec6(delta.segment<6>(o));
        break;
      }
      case VarKind::Affine: {
        FrameState* f = state.find_frame(k.frame);
        if (f) {
          f->affine.a += delta[o];
          f->affine.b += delta[o + 1];
        }
        break;
      }
      case VarKind::Idepth: {
        FrameState* f = state.find_frame(k.frame);
        if (f && k.index >= 0 && k.index < int(f->points.size())) {
          f->points[k.index].idepth =
              std::max(f->points[k.index].idepth + delta[o], 1e-6);
        }
        break;
      }
      case VarKind::Intrinsics:
        state.cam.fx += delta[o];
        state.cam.fy += delta[o + 1];
        state.cam.cx += delta[o + 2];
        state.cam.cy += delta[o + 3];
        break;
    }
  }
}

void WindowOptimizer::refresh_preintegrations(const FullState& state,
                                              WindowFactors& factors) const {
  for (InertialLink& link : factors.links) {
    const FrameState* fa = state.find_frame(link.id_a);
    if (!fa || link.raw.size() < 2) continue;
    const Vec2 dev = link.preint.bias_deviation(fa->bias);
    if (dev[0] > cfg_.bias_limits.max_gyro_deviation ||
        dev[1] > cfg_.bias_limits.max_accel_deviation) {
      link.preint = preintegrate(link.raw, fa->bias, cfg_.noise);
    }
  }
}

OptimizeReport WindowOptimizer::optimize(FullState& state,
                                         WindowFactors& factors,
                                         const MarginalizationPrior* prior) const {
  OptimizeReport report;
  refresh_preintegrations(state, factors);

  double lm = cfg_.lm_initial;
  double energy = total_energy(state, factors, prior);
  report.initial_energy = energy;
  int grew = 0;

  for (int iter = 0; iter < cfg_.max_iterations; ++iter) {
    report.iterations = iter + 1;
    const LinearSystem sys = build_full_system(state, factors, prior);
    if (sys.energy > energy * (1.0 + 1e-12) + 1e-12) {
      if (++grew >= cfg_.divergence_window) {
        report.diverged = true;
        break;
      }
    } else {
      grew = 0;
    }

    bool stepped = false;
    while (lm <= cfg_.lm_max) {
      bool ok = false;
      const VecX delta = solve_schur(sys, lm, &ok);
      if (!ok) {
        lm = std::max(lm * 4.0, cfg_.lm_min * 4.0);
        continue;
      }
      if (delta.lpNorm<Eigen::Infinity>() < cfg_.min_delta_norm) {
        report.converged = true;
        break;
      }
      FullState trial = state;
      apply_step(trial, sys.layout, delta);
      const double trial_energy = total_energy(trial, factors, prior);
      if (std::isfinite(trial_energy) && trial_energy < energy) {
        state = std::move(trial);
        energy = trial_energy;
        report.energy_history.push_back(energy);
        ++report.accepted;
        lm = std::max(lm * 0.5, cfg_.lm_min);
        stepped = true;
        break;
      }
      lm *= 4.0;
    }
    if (report.converged) break;
    if (!stepped) {
      if (lm > cfg_.lm_max) report.solver_failed = report.accepted == 0;
      break;
    }
  }

  report.final_energy = energy;
  return report;
}

LinearSystem WindowOptimizer::linearize_visual_for_marg(
    const FullState& state, int frame_id, const ValueMap& fej) const {
  const FrameState* host = state.find_frame(frame_id);
  if (!host) throw std::invalid_argument("linearize_visual_for_marg: frame");

  LinearSystem sys;
  for (const FrameState& f : state.frames) {
    sys.layout.add(pose_key(f.id));
    sys.layout.add(affine_key(f.id));
  }
  for (size_t i = 0; i < host->points.size(); ++i) {
    const HostedPoint& pt = host->points[i];
    if (pt.status == HostedPoint::Status::active &&
        pt.obs_count >= cfg_.min_obs_mature)
      sys.layout.add(idepth_key(frame_id, int(i)));
  }
  sys.init();

  PhotometricSettings st;
  st.huber_gamma = cfg_.huber_gamma;
  st.gradient_weight_c = cfg_.gradient_weight_c;
  st.use_fej = true;
  const double lambda = cfg_.lambda_photo;

  for (size_t pi = 0; pi < host->points.size(); ++pi) {
    const HostedPoint& pt = host->points[pi];
    if (pt.status != HostedPoint::Status::active ||
        pt.obs_count < cfg_.min_obs_mature)
      continue;
    const VarKey pt_key = idepth_key(frame_id, int(pi));
    for (const FrameState& target : state.frames) {
      if (target.id == frame_id) continue;
      PhotometricInput in;
      in.host = &host->image();
      in.target = &target.image();
      in.cam = state.cam;
      in.pixel = pt.pixel;
      in.idepth = pt.idepth;
      in.t_host_cam_w = host->t_cam_w;
      in.t_target_cam_w = target.t_cam_w;
      in.aff_host = host->affine;
      in.aff_target = target.affine;
      in.t_host_fej = fej_pose(&fej, frame_id, host->t_cam_w);
      in.t_target_fej = fej_pose(&fej, target.id, target.t_cam_w);
      in.idepth_fej = pt.idepth;

      const PhotometricEval ev = evaluate_photometric(in, st);
      if (!ev.valid) continue;

      Eigen::Matrix<double, kPatternSize, 17> j;
      j.setZero();
      j.block<kPatternSize, 6>(0, 0) = ev.j_host;
      j.block<kPatternSize, 6>(0, 6) = ev.j_target;
      j.block<kPatternSize, 2>(0, 12) = ev.j_aff_host;
      j.block<kPatternSize, 2>(0, 14) = ev.j_aff_target;
      j.col(16) = ev.j_idepth;

      const Eigen::Matrix<double, kPatternSize, 1> w = lambda * ev.weight;
      const Eigen::Matrix<double, 17, 17> h_local =
          j.transpose() * w.asDiagonal() * j;
      const Eigen::Matrix<double, 17, 1> b_local =
          -j.transpose() * w.cwiseProduct(ev.r).matrix();

      const std::vector<std::pair<VarKey, int>> slots = {
          {pose_key(frame_id), 0},    {pose_key(target.id), 6},
          {affine_key(frame_id), 12}, {affine_key(target.id), 14},
          {pt_key, 16}};
      for (const auto& [ka, oa] : slots) {
        sys.add_b(ka, b_local.segment(oa, var_dim(ka.kind)));
        for (const auto& [kb, ob] : slots) {
          sys.add_h(ka, kb, h_local.block(oa, ob, var_dim(ka.kind),
                                          var_dim(kb.kind)));
        }
      }
      sys.energy += lambda * ev.energy;
    }
  }
  sys.symmetrize();
  return sys;
}

LinearSystem WindowOptimizer::linearize_metric_for_marg(
    const FullState& state, const WindowFactors& factors, int frame_id,
    const ValueMap& fej) const {
  LinearSystem sys;
  sys.layout.add(sg_key());
  for (const InertialLink& link : factors.links) {
    if (link.id_a != frame_id && link.id_b != frame_id) continue;
    for (int id : {link.id_a, link.id_b}) {
      sys.layout.add(pose_key(id));
      sys.layout.add(velocity_key(id));
      sys.layout.add(bias_key(id));
    }
  }
  sys.init();

  WindowFactors touching;
  for (const InertialLink& link : factors.links) {
    if (link.id_a == frame_id || link.id_b == frame_id)
      touching.links.push_back(link);
  }
  accumulate_inertial(sys, state, touching, &fej);
  sys.symmetrize();
  return sys;
}

void WindowOptimizer::update_point_stats(FullState& state) const {
  PhotometricSettings st;
  st.huber_gamma = cfg_.huber_gamma;
  st.gradient_weight_c = cfg_.gradient_weight_c;
  st.compute_jacobians = false;

  for (FrameState& host : state.frames) {
    for (auto& pt : host.points) {
      if (pt.status != HostedPoint::Status::active) continue;
      int obs = 0;
      double energy = 0.0;
      for (const FrameState& target : state.frames) {
        if (target.id == host.id) continue;
        PhotometricInput in;
        in.host = &host.image();
        in.target = &target.image();
        in.cam = state.cam;
        in.pixel = pt.pixel;
        in.idepth = pt.idepth;
        in.t_host_cam_w = host.t_cam_w;
        in.t_target_cam_w = target.t_cam_w;
        in.aff_host = host.affine;
        in.aff_target = target.affine;
        const PhotometricEval ev = evaluate_photometric(in, st);
        if (!ev.valid) continue;
        ++obs;
        energy += ev.energy;
      }
      pt.obs_count = obs;
      pt.mean_energy = obs > 0 ? energy / obs : 0.0;
    }
  }
}

int WindowOptimizer::cull_outliers(FullState& state) const {
  int dropped = 0;
  for (FrameState& f : state.frames) {
    for (auto& pt : f.points) {
      if (pt.status != HostedPoint::Status::active) continue;
      if (pt.obs_count == 0 || pt.mean_energy > cfg_.outlier_energy ||
          !(pt.idepth > 0.0)) {
        pt.status = HostedPoint::Status::dropped;
        ++dropped;
      }
    }
  }
  return dropped;
}

}  // namespace svio
