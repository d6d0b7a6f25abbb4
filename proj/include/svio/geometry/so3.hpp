#pragma once

#include <cmath>
#include <stdexcept>

#include "svio/common.hpp"

namespace svio {

// Angle below which the trigonometric coefficient ratios are evaluated by
// truncated series. At 1e-4 the three-term series is exact to double
// precision while the closed forms still carry ~1e-8 relative cancellation.
constexpr double kSmallAngle = 1e-4;

inline Mat33 skew(const Vec3& v) {
  Mat33 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

// (1 - cos t) / t^2
inline double coeff_one_minus_cos(double theta) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  return (1.0 - std::cos(theta)) / t2;
}

// (t - sin t) / t^3
inline double coeff_theta_minus_sin(double theta) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
  return (theta - std::sin(theta)) / (t2 * theta);
}

// (1 - t^2/2 - cos t) / t^4
inline double coeff_cos_quartic(double theta) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) return 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
  return (1.0 - 0.5 * t2 - std::cos(theta)) / (t2 * t2);
}

// (t - sin t - t^3/6) / t^5
inline double coeff_sin_quintic(double theta) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle)
    return -1.0 / 120.0 + t2 / 5040.0 - t2 * t2 / 362880.0;
  return (theta - std::sin(theta) - t2 * theta / 6.0) / (t2 * t2 * theta);
}

inline Quat so3_exp(const Vec3& phi) {
  const double theta = phi.norm();
  double imag;  // sin(t/2)/t
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    imag = 0.5 - t2 / 48.0 + t2 * t2 / 3840.0;
  } else {
    imag = std::sin(0.5 * theta) / theta;
  }
  Quat q;
  q.w() = std::cos(0.5 * theta);
  q.vec() = imag * phi;
  return q;
}

// Principal-branch log. The branch is ambiguous at a rotation angle of pi.
inline Vec3 so3_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double n = q.vec().norm();
  if (q.w() < 5e-10)
    throw std::domain_error("so3_log: rotation angle at pi, branch ambiguous");
  double k;  // phi = k * vec
  if (n < kSmallAngle * 0.5) {
    const double r2 = (n * n) / (q.w() * q.w());
    k = 2.0 / q.w() * (1.0 - r2 / 3.0 + r2 * r2 / 5.0);
  } else {
    k = 2.0 * std::atan2(n, q.w()) / n;
  }
  return k * q.vec();
}

// Left Jacobian of SO(3): d/dphi of exp evaluated with left perturbations.
inline Mat33 so3_left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat33 ph = skew(phi);
  return Mat33::Identity() + coeff_one_minus_cos(theta) * ph +
         coeff_theta_minus_sin(theta) * ph * ph;
}

inline Mat33 so3_left_jacobian_inv(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat33 ph = skew(phi);
  double c;
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
  } else {
    c = 1.0 / (theta * theta) -
        (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat33::Identity() - 0.5 * ph + c * ph * ph;
}

inline Mat33 so3_right_jacobian(const Vec3& phi) {
  return so3_left_jacobian(-phi);
}

inline Mat33 so3_right_jacobian_inv(const Vec3& phi) {
  return so3_left_jacobian_inv(-phi);
}

}  // namespace svio
