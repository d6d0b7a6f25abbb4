#include "svio/vision/photometric.hpp"

namespace svio {

PhotometricEval evaluate_photometric(const PhotometricInput& in,
                                     const PhotometricSettings& st) {
  PhotometricEval out;
  out.r.setZero();
  out.weight.setZero();
  out.omega.setZero();
  out.j_host.setZero();
  out.j_target.setZero();
  out.j_idepth.setZero();
  out.j_aff_host.setZero();
  out.j_aff_target.setZero();
  out.j_intrinsics.setZero();

  const Se3 t_th = in.t_target_cam_w * in.t_host_cam_w.inverse();
  const double kappa = (in.target->exposure / in.host->exposure) *
                       std::exp(in.aff_target.a - in.aff_host.a);

  // FEJ chain for jacobians; falls back to current values
  const bool fej = st.use_fej;
  const Se3& t_h0 = fej ? in.t_host_fej : in.t_host_cam_w;
  const Se3& t_t0 = fej ? in.t_target_fej : in.t_target_cam_w;
  const double id0 = fej ? in.idepth_fej : in.idepth;
  const Se3 t_th0 = t_t0 * t_h0.inverse();
  const Mat33 r_t0 = t_t0.rotation_matrix();
  const Mat33 r_th0 = t_th0.rotation_matrix();

  if (!(in.idepth > 0.0) || !(id0 > 0.0)) return out;

  for (int k = 0; k < kPatternSize; ++k) {
    const Vec2 p_k = in.pixel + pattern_offsets()[k];
    if (!in.host->interp_in_bounds(p_k.x(), p_k.y()) ||
        p_k.x() < 1 || p_k.y() < 1 || p_k.x() > in.cam.width - 2.0 ||
        p_k.y() > in.cam.height - 2.0) {
      out.out_of_bounds = true;
      return out;
    }
    const Vec3 dir = in.cam.unproject(p_k);

    // residual at current values
    const Vec3 x_t = t_th * (dir / in.idepth);
    const auto px = in.cam.project(x_t);
    if (!px) {
      out.behind_camera = true;
      return out;
    }
    if (!(px->x() >= kPatternMargin && px->y() >= kPatternMargin &&
          px->x() <= in.cam.width - 1.0 - kPatternMargin &&
          px->y() <= in.cam.height - 1.0 - kPatternMargin)) {
      out.out_of_bounds = true;
      return out;
    }

    const Vec3 host_v = in.host->interp_grad(p_k.x(), p_k.y());
    const double i_h = host_v[0];
    const double i_t = in.target->interp(px->x(), px->y());
    const double r = (i_t - in.aff_target.b) - kappa * (i_h - in.aff_host.b);

    const double omega = gradient_weight(
        host_v[1] * host_v[1] + host_v[2] * host_v[2], st.gradient_weight_c);
    const double hw = huber_weight(r, st.huber_gamma);

    out.r[k] = r;
    out.omega[k] = omega;
    out.weight[k] = omega * hw;
    out.energy += omega * huber_energy(r, st.huber_gamma);

    if (!st.compute_jacobians) continue;

    // geometric chain at the first-estimate values
    const Vec3 x_t0 = t_th0 * (dir / id0);
    const auto px0 = in.cam.project(x_t0);
    if (!px0) {
      out.behind_camera = true;
      return out;
    }
    Vec2 px0_c = *px0;
    px0_c.x() = std::clamp(px0_c.x(), 1.0, in.cam.width - 2.000001);
    px0_c.y() = std::clamp(px0_c.y(), 1.0, in.cam.height - 2.000001);
    const Vec3 tgt_v = in.target->interp_grad(px0_c.x(), px0_c.y());
    const Eigen::RowVector2d g(tgt_v[1], tgt_v[2]);

    const double iz = 1.0 / x_t0.z();
    Eigen::Matrix<double, 2, 3> dpix;
    dpix << in.cam.fx * iz, 0.0, -in.cam.fx * x_t0.x() * iz * iz, 0.0,
        in.cam.fy * iz, -in.cam.fy * x_t0.y() * iz * iz;
    const Eigen::RowVector3d dr_dxt = g * dpix;

    const Vec3 x_w0 = t_h0.inverse() * (dir / id0);
    Eigen::Matrix<double, 3, 6> dxw;
    dxw.leftCols<3>() = Mat33::Identity();
    dxw.rightCols<3>() = -skew(x_w0);

    out.j_target.row(k) = dr_dxt * r_t0 * dxw;
    out.j_host.row(k) = -out.j_target.row(k);

    out.j_idepth[k] = dr_dxt * (r_th0 * (-dir / (id0 * id0)));

    out.j_aff_host.row(k) << kappa * (i_h - in.aff_host.b), kappa;
    out.j_aff_target.row(k) << -kappa * (i_h - in.aff_host.b), -1.0;

    if (st.compute_intrinsic_jacobians) {
      // through the target projection
      Eigen::Matrix<double, 2, 4> dpix_dc;
      dpix_dc << x_t0.x() * iz, 0.0, 1.0, 0.0, 0.0, x_t0.y() * iz, 0.0, 1.0;
      Eigen::RowVector4d j_c = g * dpix_dc;
      // through the host unprojection
      Eigen::Matrix<double, 3, 4> ddir;
      ddir.setZero();
      ddir(0, 0) = -dir.x() / in.cam.fx;
      ddir(1, 1) = -dir.y() / in.cam.fy;
      ddir(0, 2) = -1.0 / in.cam.fx;
      ddir(1, 3) = -1.0 / in.cam.fy;
      j_c += dr_dxt * r_th0 * ddir / id0;
      out.j_intrinsics.row(k) = j_c;
    }
  }

  out.valid = true;
  return out;
}

}  // namespace svio
