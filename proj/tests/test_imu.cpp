#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "support/test_utils.hpp"
#include "svio/imu/preintegration.hpp"

using namespace svio;
using namespace svio::testing;

namespace {

// Analytic body-frame measurement signals for oracle comparisons.
struct MeasurementSignal {
  Vec3 gyro_amp, gyro_freq, gyro_phase;
  Vec3 accel_amp, accel_freq, accel_phase;

  static MeasurementSignal random(std::mt19937_64& rng) {
    MeasurementSignal s;
    s.gyro_amp = random_vec3(rng, 1.2);
    s.gyro_freq = random_vec3(rng, 4.0).cwiseAbs() + Vec3::Constant(0.5);
    s.gyro_phase = random_vec3(rng, 3.0);
    s.accel_amp = random_vec3(rng, 3.0);
    s.accel_freq = random_vec3(rng, 4.0).cwiseAbs() + Vec3::Constant(0.5);
    s.accel_phase = random_vec3(rng, 3.0);
    return s;
  }

  ImuMeasurement at(double t_sec) const {
    ImuMeasurement m;
    m.t = from_seconds(t_sec);
    for (int k = 0; k < 3; ++k) {
      m.gyro[k] = gyro_amp[k] * std::sin(gyro_freq[k] * t_sec + gyro_phase[k]);
      m.accel[k] =
          accel_amp[k] * std::sin(accel_freq[k] * t_sec + accel_phase[k]);
    }
    return m;
  }

  std::vector<ImuMeasurement> sample(double t0, double t1, double rate) const {
    std::vector<ImuMeasurement> out;
    const int n = int(std::llround((t1 - t0) * rate));
    for (int i = 0; i <= n; ++i) out.push_back(at(t0 + i / rate));
    return out;
  }
};

// Independent gravity-free increment integrator (plain midpoint chaining).
struct OracleIncrements {
  Quat dq = Quat::Identity();
  Vec3 dv = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
};

OracleIncrements brute_force_integrate(const std::vector<ImuMeasurement>& ms,
                                       const ImuBias& bias) {
  OracleIncrements s;
  for (size_t k = 0; k + 1 < ms.size(); ++k) {
    const double dt = seconds_between(ms[k].t, ms[k + 1].t);
    const Vec3 w = 0.5 * (ms[k].gyro + ms[k + 1].gyro) - bias.gyro;
    const Mat33 r0 = s.dq.toRotationMatrix();
    const Quat q1 = (s.dq * so3_exp(w * dt)).normalized();
    const Vec3 a =
        0.5 * (r0 * (ms[k].accel - bias.accel) +
               q1.toRotationMatrix() * (ms[k + 1].accel - bias.accel));
    s.dp += s.dv * dt + 0.5 * a * dt * dt;
    s.dv += a * dt;
    s.dq = q1;
  }
  return s;
}

std::vector<ImuMeasurement> stationary_measurements(double duration,
                                                    double rate) {
  std::vector<ImuMeasurement> out;
  const int n = int(duration * rate);
  for (int i = 0; i <= n; ++i) {
    ImuMeasurement m;
    m.t = from_seconds(i / rate);
    m.gyro.setZero();
    m.accel = Vec3(0, 0, kGravityNorm);
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST_CASE("stationary equilibrium keeps pose and velocity fixed") {
  const auto ms = stationary_measurements(0.4, 200.0);
  const auto preint = preintegrate(ms, ImuBias{}, NoiseConfig{});

  ImuState s;
  s.pose = Se3(Quat::Identity(), Vec3(1, 2, 3));
  const auto pred = predict(s, preint, gravity_world());
  CHECK(boxminus(pred.state, s).head<9>().norm() < 1e-12);
}

TEST_CASE("constant extra acceleration integrates to the analytic result") {
  std::vector<ImuMeasurement> ms;
  for (int i = 0; i <= 200; ++i) {
    ImuMeasurement m;
    m.t = from_seconds(i / 200.0);
    m.accel = Vec3(1, 0, kGravityNorm);
    ms.push_back(m);
  }
  const auto preint = preintegrate(ms, ImuBias{}, NoiseConfig{}, 2.0);
  // raw increments integrate the full specific force
  CHECK((preint.delta_velocity() - Vec3(1, 0, kGravityNorm)).norm() < 1e-12);
  CHECK((preint.delta_position() - Vec3(0.5, 0, 0.5 * kGravityNorm)).norm() <
        1e-10);

  ImuState s;
  const auto pred = predict(s, preint, gravity_world());
  CHECK((pred.state.velocity - Vec3(1, 0, 0)).norm() < 1e-12);
  CHECK((pred.state.pose.translation() - Vec3(0.5, 0, 0)).norm() < 1e-10);
}

TEST_CASE("errors: empty set and non-monotone timestamps") {
  CHECK_THROWS_AS(preintegrate({}, ImuBias{}, NoiseConfig{}),
                  std::invalid_argument);
  auto ms = stationary_measurements(0.1, 100.0);
  std::swap(ms[3].t, ms[4].t);
  CHECK_THROWS_AS(preintegrate(ms, ImuBias{}, NoiseConfig{}),
                  std::invalid_argument);
}

TEST_CASE("duration above the configured maximum is flagged, not fatal") {
  const auto ms = stationary_measurements(0.7, 100.0);
  const auto preint = preintegrate(ms, ImuBias{}, NoiseConfig{}, 0.5);
  CHECK(preint.duration_flagged());
  CHECK(preintegrate(ms, ImuBias{}, NoiseConfig{}, 1.0).duration_flagged() ==
        false);
}

TEST_CASE("200 Hz preintegration matches 20 kHz brute force on 50 segments") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const MeasurementSignal sig = MeasurementSignal::random(rng);
    const ImuBias bias{random_vec3(rng, 0.02), random_vec3(rng, 0.1)};

    const auto coarse = sig.sample(0.0, 0.5, 200.0);
    const auto fine = sig.sample(0.0, 0.5, 20000.0);

    const auto preint = preintegrate(coarse, bias, NoiseConfig{});
    const auto oracle = brute_force_integrate(fine, bias);

    CHECK((preint.delta_position() - oracle.dp).norm() < 1e-4);
    CHECK(so3_log(preint.delta_rotation().conjugate() * oracle.dq).norm() <
          1e-4);
    CHECK((preint.delta_velocity() - oracle.dv).norm() < 2e-4);

    Eigen::SelfAdjointEigenSolver<Mat1515> es(preint.covariance());
    CHECK(es.eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("covariance trace grows monotonically") {
  std::mt19937_64 rng(103);
  const MeasurementSignal sig = MeasurementSignal::random(rng);
  const auto ms = sig.sample(0.0, 0.5, 200.0);
  double last = 0.0;
  for (size_t n = 2; n <= ms.size(); n += 7) {
    std::vector<ImuMeasurement> head(ms.begin(), ms.begin() + n);
    const auto preint = preintegrate(head, ImuBias{}, NoiseConfig{});
    const double tr = preint.covariance().trace();
    CHECK(tr >= last);
    last = tr;
  }
}

TEST_CASE("increments do not depend on any world frame convention") {
  std::mt19937_64 rng(107);
  const MeasurementSignal sig = MeasurementSignal::random(rng);
  const auto ms = sig.sample(0.0, 0.4, 200.0);
  const auto a = preintegrate(ms, ImuBias{}, NoiseConfig{});
  const auto b = preintegrate(ms, ImuBias{}, NoiseConfig{});
  CHECK((a.delta_position() - b.delta_position()).norm() == 0.0);
  CHECK((a.delta_velocity() - b.delta_velocity()).norm() == 0.0);
  CHECK((a.delta_rotation().coeffs() - b.delta_rotation().coeffs()).norm() ==
        0.0);

  // prediction is equivariant under a world yaw+translation change
  ImuState s;
  s.pose = random_se3(rng);
  s.velocity = random_vec3(rng, 1.5);
  const Se3 g(Quat(Eigen::AngleAxisd(0.8, Vec3::UnitZ())), Vec3(2, -1, 3));
  ImuState sg;
  sg.pose = g * s.pose;
  sg.velocity = g.rotation() * s.velocity;
  const auto p1 = predict(s, a, gravity_world());
  const auto p2 = predict(sg, a, gravity_world());
  CHECK(se3_distance(g * p1.state.pose, p2.state.pose) < 1e-12);
  CHECK((g.rotation() * p1.state.velocity - p2.state.velocity).norm() < 1e-12);
}

TEST_CASE("free fall gains gravity velocity") {
  std::vector<ImuMeasurement> ms;
  for (int i = 0; i <= 200; ++i) {
    ImuMeasurement m;
    m.t = from_seconds(i / 200.0);
    ms.push_back(m);  // zero specific force
  }
  ImuState s;
  const auto pred = predict(
      s, preintegrate(ms, ImuBias{}, NoiseConfig{}, 2.0), gravity_world());
  CHECK((pred.state.velocity - Vec3(0, 0, -kGravityNorm)).norm() < 1e-10);
}

TEST_CASE("zero-duration limit predicts the input state") {
  std::vector<ImuMeasurement> one(1);
  one[0].accel = Vec3(0, 0, kGravityNorm);
  const auto preint = preintegrate(one, ImuBias{}, NoiseConfig{});
  CHECK(preint.dt() == 0.0);
  std::mt19937_64 rng(109);
  ImuState s;
  s.pose = random_se3(rng);
  s.velocity = random_vec3(rng, 1.0);
  const auto pred = predict(s, preint, gravity_world());
  CHECK(boxminus(pred.state, s).norm() < 1e-15);
}

TEST_CASE("bias deviation beyond threshold raises the re-preintegration flag") {
  const auto ms = stationary_measurements(0.3, 200.0);
  const auto preint = preintegrate(ms, ImuBias{}, NoiseConfig{});
  ImuState s;
  s.bias.gyro = Vec3(0.2, 0, 0);  // above the 0.1 rad/s default
  CHECK(predict(s, preint, gravity_world()).bias_out_of_range);
  s.bias.gyro.setZero();
  CHECK_FALSE(predict(s, preint, gravity_world()).bias_out_of_range);
}

TEST_CASE("bias correction error shrinks quadratically (log-log slope 2)") {
  std::mt19937_64 rng(113);
  const MeasurementSignal sig = MeasurementSignal::random(rng);
  const auto ms = sig.sample(0.0, 0.5, 200.0);
  const ImuBias b0{Vec3::Zero(), Vec3::Zero()};
  const auto preint = preintegrate(ms, b0, NoiseConfig{});

  const Vec6 direction = (Vec6() << 0.6, -0.8, 0.4, 0.5, -0.3, 0.7).finished();
  std::vector<double> logm, loge;
  for (double m : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
    const ImuBias bp = b0 + Vec6(m * direction);
    Quat cq;
    Vec3 cv, cp;
    preint.corrected(bp, &cq, &cv, &cp);
    const auto exact = preintegrate(ms, bp, NoiseConfig{});
    const double err =
        (cp - exact.delta_position()).norm() +
        (cv - exact.delta_velocity()).norm() +
        so3_log(cq.conjugate() * exact.delta_rotation()).norm();
    logm.push_back(std::log(m));
    loge.push_back(std::log(std::max(err, 1e-300)));
  }
  const int n = int(logm.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sx += logm[i];
    sy += loge[i];
    sxx += logm[i] * logm[i];
    sxy += logm[i] * loge[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  CHECK(slope == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("inertial energy: zero at the prediction, exact quadratic form") {
  std::mt19937_64 rng(127);
  const MeasurementSignal sig = MeasurementSignal::random(rng);
  const auto ms = sig.sample(0.0, 0.4, 200.0);
  const auto preint = preintegrate(ms, ImuBias{}, NoiseConfig{});

  ImuState si;
  si.pose = random_se3(rng);
  si.velocity = random_vec3(rng, 1.0);
  const auto pred = predict(si, preint, gravity_world());

  const auto at_pred =
      inertial_energy(si, pred.state, preint, gravity_world());
  CHECK(at_pred.energy < 1e-16);
  CHECK(at_pred.residual.norm() < 1e-12);

  Vec15 d = Vec15::Zero();
  d.head<6>() << 0.01, -0.02, 0.015, 0.004, -0.006, 0.008;
  d.segment<3>(6) << 0.05, -0.02, 0.01;
  const auto e1 =
      inertial_energy(si, boxplus(pred.state, d), preint, gravity_world());
  const auto e2 = inertial_energy(si, boxplus(pred.state, Vec15(2.0 * d)),
                                  preint, gravity_world());
  CHECK(e2.energy == doctest::Approx(4.0 * e1.energy).epsilon(1e-12));
  CHECK(e1.energy ==
        doctest::Approx(e1.residual.dot(e1.information * e1.residual))
            .epsilon(1e-12));
}

TEST_CASE("analytic jacobians match central finite differences") {
  std::mt19937_64 rng(131);
  for (int trial = 0; trial < 10; ++trial) {
    const MeasurementSignal sig = MeasurementSignal::random(rng);
    const auto ms = sig.sample(0.0, 0.4, 200.0);
    const ImuBias blin{random_vec3(rng, 0.01), random_vec3(rng, 0.05)};
    const auto preint = preintegrate(ms, blin, NoiseConfig{});

    ImuState si, sj;
    si.pose = random_se3(rng);
    si.velocity = random_vec3(rng, 1.5);
    si.bias = blin + Vec6(0.3 * random_vec3(rng, 0.05).replicate<2, 1>());
    sj = predict(si, preint, gravity_world()).state;
    sj = boxplus(sj, Vec15::Constant(0.02));
    sj.bias = si.bias + Vec6(random_vec3(rng, 0.01).replicate<2, 1>());

    const auto ev = inertial_energy(si, sj, preint, gravity_world());

    const auto f_i = [&](const VecX& d) -> VecX {
      const ImuState p = boxplus(si, Vec15(d));
      return inertial_energy(p, sj, preint, gravity_world()).residual;
    };
    const auto f_j = [&](const VecX& d) -> VecX {
      const ImuState p = boxplus(sj, Vec15(d));
      return inertial_energy(si, p, preint, gravity_world()).residual;
    };
    CHECK(rel_error(numeric_jacobian(f_i, 15, 1e-6), ev.jacobian_i) < 1e-4);
    CHECK(rel_error(numeric_jacobian(f_j, 15, 1e-6), ev.jacobian_j) < 1e-4);
  }
}

TEST_CASE("energy invariant under yaw-and-translation gauge transforms") {
  std::mt19937_64 rng(137);
  const MeasurementSignal sig = MeasurementSignal::random(rng);
  const auto ms = sig.sample(0.0, 0.4, 200.0);
  const auto preint = preintegrate(ms, ImuBias{}, NoiseConfig{});

  ImuState si, sj;
  si.pose = random_se3(rng);
  si.velocity = random_vec3(rng, 1.0);
  sj = boxplus(predict(si, preint, gravity_world()).state,
               Vec15::Constant(0.01));

  const double e0 = inertial_energy(si, sj, preint, gravity_world()).energy;
  for (int k = 0; k < 10; ++k) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const Se3 g(Quat(Eigen::AngleAxisd(u(rng), Vec3::UnitZ())),
                random_vec3(rng, 3.0));  // rotation about the gravity axis
    ImuState gi = si, gj = sj;
    gi.pose = g * si.pose;
    gi.velocity = g.rotation() * si.velocity;
    gj.pose = g * sj.pose;
    gj.velocity = g.rotation() * sj.velocity;
    const double eg = inertial_energy(gi, gj, preint, gravity_world()).energy;
    CHECK(std::abs(eg - e0) < 1e-8 * std::max(1.0, e0));
  }
}
