#pragma once

#include "svio/geometry/so3.hpp"

namespace svio {

// Rigid transform T in SE(3), stored as unit quaternion + translation.
// Tangent ordering everywhere: (translation, rotation).
class Se3 {
 public:
  Se3() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
  Se3(const Quat& q, const Vec3& t) : q_(q.normalized()), t_(t) {}
  Se3(const Mat33& r, const Vec3& t) : q_(Quat(r).normalized()), t_(t) {}

  static Se3 identity() { return Se3(); }

  static Se3 exp(const Vec6& xi) {
    const Vec3 rho = xi.head<3>();
    const Vec3 phi = xi.tail<3>();
    return Se3(so3_exp(phi), so3_left_jacobian(phi) * rho);
  }

  Vec6 log() const {
    const Vec3 phi = so3_log(q_);
    Vec6 xi;
    xi.head<3>() = so3_left_jacobian_inv(phi) * t_;
    xi.tail<3>() = phi;
    return xi;
  }

  Se3 inverse() const {
    const Quat qi = q_.conjugate();
    return Se3(qi, -(qi * t_));
  }

  Se3 operator*(const Se3& o) const {
    return Se3(q_ * o.q_, t_ + q_ * o.t_);
  }

  Vec3 operator*(const Vec3& p) const { return q_ * p + t_; }

  Mat66 adjoint() const {
    const Mat33 r = rotation_matrix();
    Mat66 adj = Mat66::Zero();
    adj.topLeftCorner<3, 3>() = r;
    adj.topRightCorner<3, 3>() = skew(t_) * r;
    adj.bottomRightCorner<3, 3>() = r;
    return adj;
  }

  const Quat& rotation() const { return q_; }
  const Vec3& translation() const { return t_; }
  Vec3& translation() { return t_; }
  Mat33 rotation_matrix() const { return q_.toRotationMatrix(); }

  void set_rotation(const Quat& q) { q_ = q.normalized(); }

  Mat44 matrix() const {
    Mat44 m = Mat44::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = t_;
    return m;
  }

 private:
  Quat q_;
  Vec3 t_;
};

// Right-multiplicative increment: x' = x * exp(delta).
inline Se3 boxplus(const Se3& x, const Vec6& delta) {
  return x * Se3::exp(delta);
}

// Tangent d with boxplus(ref, d) == x, i.e. log(ref^-1 * x).
inline Vec6 boxminus(const Se3& x, const Se3& ref) {
  return (ref.inverse() * x).log();
}

// Q block of the SE(3) left Jacobian (coupling of translation rows to
// rotation columns), Barfoot's closed form.
inline Mat33 se3_jacobian_q(const Vec3& rho, const Vec3& phi) {
  const double theta = phi.norm();
  const Mat33 rx = skew(rho);
  const Mat33 px = skew(phi);
  const Mat33 pxrx = px * rx;
  const Mat33 rxpx = rx * px;
  const Mat33 pxrxpx = pxrx * px;

  const double c1 = coeff_theta_minus_sin(theta);
  const double c2 = coeff_cos_quartic(theta);
  const double c3 = 0.5 * (c2 - 3.0 * coeff_sin_quintic(theta));

  return 0.5 * rx + c1 * (pxrx + rxpx + pxrxpx) -
         c2 * (px * pxrx + rxpx * px - 3.0 * pxrxpx) -
         c3 * (pxrxpx * px + px * pxrxpx);
}

inline Mat66 se3_left_jacobian(const Vec6& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  const Mat33 jl = so3_left_jacobian(phi);
  Mat66 j = Mat66::Zero();
  j.topLeftCorner<3, 3>() = jl;
  j.bottomRightCorner<3, 3>() = jl;
  j.topRightCorner<3, 3>() = se3_jacobian_q(rho, phi);
  return j;
}

inline Mat66 se3_left_jacobian_inv(const Vec6& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  const Mat33 jli = so3_left_jacobian_inv(phi);
  const Mat33 q = se3_jacobian_q(rho, phi);
  Mat66 j = Mat66::Zero();
  j.topLeftCorner<3, 3>() = jli;
  j.bottomRightCorner<3, 3>() = jli;
  j.topRightCorner<3, 3>() = -jli * q * jli;
  return j;
}

inline Mat66 se3_right_jacobian_inv(const Vec6& xi) {
  return se3_left_jacobian_inv(-xi);
}

}  // namespace svio
