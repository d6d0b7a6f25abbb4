#pragma once

#include "svio/geometry/se3.hpp"

namespace svio {

namespace detail {

// W matrix of the sim(3) exponential: translation = W(sigma, phi) * rho.
inline Mat33 sim3_calc_w(double sigma, const Vec3& phi) {
  const double theta = phi.norm();
  const double scale = std::exp(sigma);
  const Mat33 px = skew(phi);
  const Mat33 px2 = px * px;

  const double c =
      std::abs(sigma) < 1e-10 ? 1.0 + 0.5 * sigma : std::expm1(sigma) / sigma;
  double a, b;
  if (theta >= kSmallAngle) {
    const double t2 = theta * theta;
    const double sa = scale * std::sin(theta);
    const double sb = scale * std::cos(theta);
    const double den = t2 + sigma * sigma;
    a = (sa * sigma + (1.0 - sb) * theta) / (theta * den);
    b = (c - ((sb - 1.0) * sigma + sa * theta) / den) / t2;
  } else if (std::abs(sigma) >= 1e-3) {
    const double s2 = sigma * sigma;
    a = ((sigma - 1.0) * scale + 1.0) / s2;
    b = (scale * 0.5 * s2 + scale - 1.0 - sigma * scale) / (s2 * sigma);
  } else {
    a = 0.5 + sigma / 3.0 + sigma * sigma / 8.0;
    b = 1.0 / 6.0 + sigma / 8.0 + sigma * sigma / 20.0;
  }
  return a * px + b * px2 + c * Mat33::Identity();
}

}  // namespace detail

// Similarity transform in SIM(3): p -> s * R * p + t.
// Tangent ordering: (translation, rotation, log-scale).
class Sim3 {
 public:
  Sim3() : q_(Quat::Identity()), t_(Vec3::Zero()), s_(1.0) {}
  Sim3(const Quat& q, const Vec3& t, double s) : q_(q.normalized()), t_(t), s_(s) {
    if (!(s_ > 0.0)) throw std::invalid_argument("Sim3: scale must be positive");
  }

  static Sim3 identity() { return Sim3(); }

  static Sim3 from_se3(const Se3& p) {
    return Sim3(p.rotation(), p.translation(), 1.0);
  }

  static Sim3 exp(const Vec7& xi) {
    const Vec3 rho = xi.head<3>();
    const Vec3 phi = xi.segment<3>(3);
    const double sigma = xi[6];
    const Mat33 w = detail::sim3_calc_w(sigma, phi);
    return Sim3(so3_exp(phi), w * rho, std::exp(sigma));
  }

  Vec7 log() const {
    const Vec3 phi = so3_log(q_);
    const double sigma = std::log(s_);
    const Mat33 w = detail::sim3_calc_w(sigma, phi);
    Vec7 xi;
    xi.head<3>() = w.partialPivLu().solve(t_);
    xi.segment<3>(3) = phi;
    xi[6] = sigma;
    return xi;
  }

  Sim3 inverse() const {
    const Quat qi = q_.conjugate();
    return Sim3(qi, -(qi * t_) / s_, 1.0 / s_);
  }

  Sim3 operator*(const Sim3& o) const {
    return Sim3(q_ * o.q_, t_ + s_ * (q_ * o.t_), s_ * o.s_);
  }

  Vec3 operator*(const Vec3& p) const { return s_ * (q_ * p) + t_; }

  Mat77 adjoint() const {
    const Mat33 r = rotation_matrix();
    Mat77 adj = Mat77::Zero();
    adj.topLeftCorner<3, 3>() = s_ * r;
    adj.block<3, 3>(0, 3) = skew(t_) * r;
    adj.block<3, 1>(0, 6) = -t_;
    adj.block<3, 3>(3, 3) = r;
    adj(6, 6) = 1.0;
    return adj;
  }

  // Rigid part: keeps rotation and translation, drops the scale factor.
  Se3 strip_scale() const { return Se3(q_, t_); }

  const Quat& rotation() const { return q_; }
  const Vec3& translation() const { return t_; }
  double scale() const { return s_; }
  Mat33 rotation_matrix() const { return q_.toRotationMatrix(); }

 private:
  Quat q_;
  Vec3 t_;
  double s_;
};

inline Sim3 boxplus(const Sim3& x, const Vec7& delta) {
  return x * Sim3::exp(delta);
}

inline Vec7 boxminus(const Sim3& x, const Sim3& ref) {
  return (ref.inverse() * x).log();
}

}  // namespace svio
