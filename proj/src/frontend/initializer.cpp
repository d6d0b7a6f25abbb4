#include "svio/frontend/initializer.hpp"

#include <Eigen/Dense>

#include "svio/optimize/window_optimizer.hpp"
#include "svio/vision/photometric.hpp"

namespace svio {

TwoFrameInitializer::TwoFrameInitializer(InitializerConfig cfg, CameraModel cam)
    : cfg_(cfg), cam_(cam) {}

void TwoFrameInitializer::reset() {
  first_.reset();
  pixels_.clear();
  idepths_.clear();
  warm_pose_ = Se3::identity();
  warm_affine_ = AffineBrightness{};
}

void TwoFrameInitializer::set_first(std::shared_ptr<const ImagePyramid> pyr,
                                    Timestamp t) {
  reset();
  first_ = std::move(pyr);
  t0_ = t;
  pixels_ = select_points(first_->level(0), cfg_.point_count);
  idepths_.assign(pixels_.size(), 1.0);
}

TwoFrameInitializer::Attempt TwoFrameInitializer::try_frame(
    const std::shared_ptr<const ImagePyramid>& pyr, Timestamp t,
    const Quat* rotation_hint) {
  (void)t;
  Attempt out;
  if (!first_ || pixels_.size() < 12) return out;

  PhotometricSettings st;
  st.huber_gamma = cfg_.huber_gamma;
  st.gradient_weight_c = cfg_.gradient_weight_c;

  // every attempt is standalone: unit depths, zero translation, and the
  // gyro-integrated rotation; stale estimates from low-parallax attempts
  // would otherwise poison later ones
  Se3 pose;
  if (rotation_hint) pose.set_rotation(*rotation_hint);
  AffineBrightness aff;
  std::vector<double> idepth(pixels_.size(), 1.0);
  const int n = int(pixels_.size());

  const auto rotation_prior = [&](const Se3& p, LinearSystem* sys) {
    if (!rotation_hint || cfg_.rotation_prior_weight <= 0.0) return 0.0;
    const double w = cfg_.rotation_prior_weight;
    const Vec3 r = so3_log(rotation_hint->conjugate() * p.rotation());
    if (sys) {
      Mat66 h = Mat66::Zero();
      h.bottomRightCorner<3, 3>() = w * Mat33::Identity();
      sys->add_h(pose_key(0), pose_key(0), h);
      Vec6 b = Vec6::Zero();
      b.tail<3>() = -w * r;
      sys->add_b(pose_key(0), b);
    }
    return w * r.squaredNorm();
  };

  const auto level_px = [](const Vec2& p, int l) {
    const double s = 1.0 / double(1 << l);
    return Vec2((p.x() + 0.5) * s - 0.5, (p.y() + 0.5) * s - 0.5);
  };

  const int coarsest = std::min(cfg_.pyramid_levels, pyr->num_levels()) - 1;
  for (int level = coarsest; level >= 0; --level) {
    const CameraModel cam_l = cam_.level(level);
    const Image& host = first_->level(level);
    const Image& target = pyr->level(level);

    const auto evaluate = [&](const Se3& p, const AffineBrightness& a,
                              const std::vector<double>& d, bool jac,
                              LinearSystem* sys) {
      double energy = rotation_prior(p, sys);
      int count = 0;
      for (int k = 0; k < n; ++k) {
        PhotometricInput in;
        in.host = &host;
        in.target = &target;
        in.cam = cam_l;
        in.pixel = level_px(pixels_[size_t(k)], level);
        in.idepth = d[size_t(k)];
        in.t_host_cam_w = Se3::identity();
        in.t_target_cam_w = p;
        in.aff_target = a;
        PhotometricSettings stt = st;
        stt.compute_jacobians = jac;
        const PhotometricEval ev = evaluate_photometric(in, stt);
        // a weak depth prior keeps occluded points anchored near unit depth
        const double dr = d[size_t(k)] - 1.0;
        energy += cfg_.depth_regularizer * dr * dr;
        if (sys) {
          const VarKey dk = idepth_key(0, k);
          sys->add_h(dk, dk,
                     (MatXX(1, 1) << cfg_.depth_regularizer).finished());
          sys->add_b(dk, VecX::Constant(1, -cfg_.depth_regularizer * dr));
        }
        if (!ev.valid) continue;
        ++count;
        energy += ev.energy;
        if (!sys || !jac) continue;

        MatXX j(kPatternSize, 9);
        j << ev.j_target, ev.j_aff_target, ev.j_idepth;
        const VecX w = ev.weight;
        const MatXX hl = j.transpose() * w.asDiagonal() * j;
        const VecX bl = -j.transpose() * w.cwiseProduct(ev.r).matrix();
        const VarKey pk = pose_key(0), ak = affine_key(0),
                     dk = idepth_key(0, k);
        const std::vector<std::pair<VarKey, int>> slots = {
            {pk, 0}, {ak, 6}, {dk, 8}};
        for (const auto& [ka, oa] : slots) {
          sys->add_b(ka, bl.segment(oa, var_dim(ka.kind)));
          for (const auto& [kb, ob] : slots)
            sys->add_h(ka, kb,
                       hl.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
        }
      }
      if (sys) sys->energy = energy;
      return std::pair<double, int>(energy, count);
    };

    double lm = 1e-4;
    auto [energy, count] = evaluate(pose, aff, idepth, false, nullptr);
    if (count < 10) continue;

    for (int iter = 0; iter < cfg_.iterations_per_level; ++iter) {
      LinearSystem sys;
      sys.layout.add(pose_key(0));
      sys.layout.add(affine_key(0));
      for (int k = 0; k < n; ++k) sys.layout.add(idepth_key(0, k));
      sys.init();
      evaluate(pose, aff, idepth, true, &sys);
      sys.symmetrize();

      bool stepped = false;
      while (lm < 1e6) {
        bool ok = false;
        const VecX delta = WindowOptimizer::solve_schur(sys, lm, &ok);
        if (!ok || delta.lpNorm<Eigen::Infinity>() < 1e-10) break;

        const Se3 pose_t = boxplus(pose, Vec6(delta.segment<6>(0)));
        const AffineBrightness aff_t{aff.a + delta[6], aff.b + delta[7]};
        std::vector<double> idepth_t = idepth;
        for (int k = 0; k < n; ++k)
          idepth_t[size_t(k)] = std::clamp(
              idepth[size_t(k)] + delta[sys.layout.offset(idepth_key(0, k))],
              1e-4, 1e4);
        const auto [e_t, c_t] = evaluate(pose_t, aff_t, idepth_t, false,
                                         nullptr);
        if (std::isfinite(e_t) && e_t < energy && c_t >= count / 2) {
          pose = pose_t;
          aff = aff_t;
          idepth = std::move(idepth_t);
          energy = e_t;
          count = c_t;
          lm = std::max(lm * 0.5, 1e-7);
          stepped = true;
          break;
        }
        lm *= 4.0;
      }
      if (!stepped) break;
    }
  }

  idepths_ = idepth;

  // rotation-compensated parallax and residual health at full resolution
  const Image& host = first_->level(0);
  const Image& target = pyr->level(0);
  double parallax = 0.0, energy = 0.0;
  int valid = 0;
  for (int k = 0; k < n; ++k) {
    PhotometricInput in;
    in.host = &host;
    in.target = &target;
    in.cam = cam_;
    in.pixel = pixels_[size_t(k)];
    in.idepth = idepths_[size_t(k)];
    in.t_host_cam_w = Se3::identity();
    in.t_target_cam_w = pose;
    in.aff_target = aff;
    PhotometricSettings stt = st;
    stt.compute_jacobians = false;
    const PhotometricEval ev = evaluate_photometric(in, stt);
    if (!ev.valid) continue;
    const Vec3 dir = cam_.unproject(pixels_[size_t(k)]);
    const auto p_full = cam_.project(pose * (dir / idepths_[size_t(k)]));
    const auto p_inf = cam_.project(pose.rotation() * dir);
    if (!p_full || !p_inf) continue;
    ++valid;
    parallax += (*p_full - *p_inf).norm();
    energy += ev.energy / kPatternSize;
  }
  if (valid > 0) {
    out.parallax_px = parallax / valid;
    out.mean_energy = energy / valid;
  }
  out.valid_points = valid;
  out.t_cam1_cam0 = pose;
  out.affine1 = aff;
  out.success = valid >= std::max(12, n / 4) &&
                out.parallax_px >= cfg_.min_parallax_px &&
                out.mean_energy <= cfg_.max_mean_energy;
  if (out.success) {
    for (int k = 0; k < n; ++k)
      out.points.emplace_back(pixels_[size_t(k)], idepths_[size_t(k)]);
  }
  return out;
}

}  // namespace svio
