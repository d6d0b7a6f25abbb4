#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "support/test_utils.hpp"
#include "svio/marg/dynamic_marginalization.hpp"

using namespace svio;
using namespace svio::testing;

namespace {

// Gaussian-linear system over simple vector variables.
LinearSystem random_linear_system(std::mt19937_64& rng,
                                  const std::vector<VarKey>& keys,
                                  int factor_rows = 24) {
  LinearSystem sys;
  for (const VarKey& k : keys) sys.layout.add(k);
  sys.init();
  const int n = sys.layout.dim();
  std::normal_distribution<double> g(0.0, 1.0);
  MatXX j(factor_rows, n);
  VecX r(factor_rows);
  for (int i = 0; i < factor_rows; ++i) {
    r[i] = g(rng);
    for (int c = 0; c < n; ++c) j(i, c) = g(rng);
  }
  sys.h = j.transpose() * j + 0.1 * MatXX::Identity(n, n);
  sys.b = -j.transpose() * r;
  sys.energy = r.squaredNorm();
  return sys;
}

ValueMap vector_values(const std::vector<VarKey>& keys,
                       std::mt19937_64* rng = nullptr) {
  ValueMap vals;
  for (const VarKey& k : keys) {
    if (k.kind == VarKind::ScaleGravity) {
      vals.emplace(k, StateValue::from_scale_gravity(Quat::Identity(), 0.0));
    } else {
      VecX v = VecX::Zero(var_dim(k.kind));
      if (rng) {
        std::normal_distribution<double> g(0.0, 1.0);
        for (int i = 0; i < v.size(); ++i) v[i] = g(*rng);
      }
      vals.emplace(k, StateValue::from_vector(k.kind, v));
    }
  }
  return vals;
}

}  // namespace

TEST_CASE("dropping an uncoupled variable leaves the kept blocks unchanged") {
  std::mt19937_64 rng(41);
  const VarKey a = velocity_key(0), b = velocity_key(1), c = velocity_key(2);
  LinearSystem sys = random_linear_system(rng, {a, b});
  // append an uncoupled variable c
  LinearSystem full;
  full.layout = sys.layout;
  full.layout.add(c);
  full.init();
  full.accumulate(sys);
  full.add_h(c, c, 2.5 * Mat33::Identity());
  full.add_b(c, Vec3(1, 2, 3));

  const auto prior =
      schur_marginalize(full, {c}, vector_values({a, b, c}));
  CHECK((prior.h_star - sys.h).norm() < 1e-12);
  CHECK((prior.b_star - sys.b).norm() < 1e-12);
}

TEST_CASE("marginalized solve equals the dense solve on kept variables") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<VarKey> keys;
    for (int i = 0; i < 6; ++i) keys.push_back(velocity_key(i));
    const LinearSystem sys = random_linear_system(rng, keys, 40);

    const VecX full = sys.h.ldlt().solve(sys.b);

    const std::set<VarKey> drop = {velocity_key(0), velocity_key(3)};
    const auto prior = schur_marginalize(sys, drop, vector_values(keys));
    const VecX reduced = prior.h_star.ldlt().solve(prior.b_star);

    int out = 0;
    for (const VarKey& k : sys.layout.keys()) {
      if (drop.count(k)) continue;
      const int o = sys.layout.offset(k);
      CHECK((full.segment(o, 3) -
             reduced.segment(prior.layout.offset(k), 3))
                .norm() < 1e-9);
      ++out;
    }
    CHECK(out == 4);
  }
}

TEST_CASE("sequential marginalization equals joint marginalization") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<VarKey> keys;
    for (int i = 0; i < 5; ++i) keys.push_back(velocity_key(i));
    const LinearSystem sys = random_linear_system(rng, keys, 40);
    const ValueMap vals = vector_values(keys);

    const auto joint =
        schur_marginalize(sys, {velocity_key(0), velocity_key(1)}, vals);

    const auto step1 = schur_marginalize(sys, {velocity_key(0)}, vals);
    LinearSystem mid;
    mid.layout = step1.layout;
    mid.h = step1.h_star;
    mid.b = step1.b_star;
    mid.energy = step1.energy_const;
    const auto step2 = schur_marginalize(mid, {velocity_key(1)}, vals);

    CHECK((joint.h_star - step2.h_star).norm() < 1e-9);
    CHECK((joint.b_star - step2.b_star).norm() < 1e-9);
    CHECK(joint.energy_const ==
          doctest::Approx(step2.energy_const).epsilon(1e-9));
  }
}

TEST_CASE("an all-zero drop block is regularized and flagged") {
  const VarKey a = velocity_key(0), b = velocity_key(1);
  LinearSystem sys;
  sys.layout.add(a);
  sys.layout.add(b);
  sys.init();
  sys.add_h(a, a, Mat33::Identity());
  sys.add_b(a, Vec3(1, 0, 0));
  // b never appears in any factor
  const auto prior = schur_marginalize(sys, {b}, vector_values({a, b}));
  CHECK(prior.regularized);
  CHECK((prior.h_star - Mat33::Identity()).norm() < 1e-9);
}

TEST_CASE("prior energy: gradient at the linearization point is b_star") {
  std::mt19937_64 rng(53);
  std::vector<VarKey> keys = {velocity_key(0), velocity_key(1)};
  const LinearSystem sys = random_linear_system(rng, keys, 20);
  const ValueMap vals = vector_values(keys);
  const auto prior = schur_marginalize(sys, {velocity_key(1)}, vals);

  const auto c = prior_energy(prior, vals);
  CHECK((c.b - prior.b_star).norm() == 0.0);
  CHECK((c.h - prior.h_star).norm() == 0.0);
  CHECK(c.energy == doctest::Approx(prior.energy_const));
}

TEST_CASE("prior energy difference matches the quadratic form prediction") {
  std::mt19937_64 rng(59);
  std::vector<VarKey> keys = {velocity_key(0), velocity_key(1)};
  const LinearSystem sys = random_linear_system(rng, keys, 20);
  ValueMap vals = vector_values(keys);
  const auto prior = schur_marginalize(sys, {velocity_key(1)}, vals);

  ValueMap cur = vals;
  std::normal_distribution<double> g(0.0, 0.1);
  VecX eps(3);
  for (int i = 0; i < 3; ++i) eps[i] = g(rng);
  cur.at(velocity_key(0)) = cur.at(velocity_key(0)).box_plus(eps);

  const auto c0 = prior_energy(prior, vals);
  const auto c1 = prior_energy(prior, cur);
  const double predicted =
      c0.energy - 2.0 * c0.b.dot(eps) + eps.dot(c0.h * eps);
  CHECK(c1.energy == doctest::Approx(predicted).epsilon(1e-10));
}

namespace {

// Relative-pose factors between three poses; exactly invariant under any
// global left multiplication, so the gauge directions span a nullspace.
LinearSystem relative_pose_system(const std::vector<Se3>& poses,
                                  const std::vector<Se3>& measurements,
                                  std::vector<VarKey>* keys_out) {
  LinearSystem sys;
  std::vector<VarKey> keys;
  for (size_t i = 0; i < poses.size(); ++i) keys.push_back(pose_key(int(i)));
  for (const VarKey& k : keys) sys.layout.add(k);
  sys.init();

  int mi = 0;
  for (size_t i = 0; i + 1 < poses.size(); ++i) {
    const size_t j = i + 1;
    const Se3 rel = poses[i].inverse() * poses[j];
    const Vec6 r = (measurements[mi].inverse() * rel).log();
    const Mat66 jj = se3_right_jacobian_inv(r);
    const Mat66 ji = -jj * (poses[j].inverse() * poses[i]).adjoint();
    sys.add_h(keys[i], keys[i], ji.transpose() * ji);
    sys.add_h(keys[i], keys[j], ji.transpose() * jj);
    sys.add_h(keys[j], keys[i], jj.transpose() * ji);
    sys.add_h(keys[j], keys[j], jj.transpose() * jj);
    sys.add_b(keys[i], -ji.transpose() * r);
    sys.add_b(keys[j], -jj.transpose() * r);
    sys.energy += r.squaredNorm();
    ++mi;
  }
  *keys_out = keys;
  return sys;
}

}  // namespace

TEST_CASE("first-estimate jacobians preserve the gauge nullspace") {
  std::mt19937_64 rng(61);
  std::vector<Se3> poses, meas;
  for (int i = 0; i < 3; ++i) poses.push_back(random_se3(rng, 1.0, 0.8));
  for (int i = 0; i < 2; ++i) {
    const Se3 rel = poses[i].inverse() * poses[i + 1];
    // noisy measurement keeps b_star nonzero
    meas.push_back(boxplus(rel, Vec6(0.05 * random_vec3(rng, 1.0).replicate<2, 1>())));
  }

  std::vector<VarKey> keys;
  const LinearSystem sys = relative_pose_system(poses, meas, &keys);

  ValueMap vals;
  for (size_t i = 0; i < poses.size(); ++i)
    vals.emplace(keys[i], StateValue::from_pose(poses[i]));

  const auto prior = schur_marginalize(sys, {keys[0]}, vals);
  CHECK(prior.b_star.norm() > 1e-3);

  // yaw about gravity + translation, applied by left multiplication
  const Se3 gauge(Quat(Eigen::AngleAxisd(0.03, Vec3::UnitZ())),
                  Vec3(0.04, -0.02, 0.03));
  ValueMap moved = vals;
  for (size_t i = 1; i < poses.size(); ++i)
    moved.at(keys[i]) = StateValue::from_pose(gauge * poses[i]);

  const auto before = prior_energy(prior, vals, false);
  const auto after = prior_energy(prior, moved, false);
  CHECK((after.b - before.b).norm() < 1e-8);

  const auto before_re = prior_energy(prior, vals, true);
  const auto after_re = prior_energy(prior, moved, true);
  CHECK((after_re.b - before_re.b).norm() > 1e-4);
}

TEST_CASE("interval rule: smallest strictly dominating power of d_min") {
  const double dmin = std::sqrt(1.1);
  CHECK(DynamicMarginalization::update_interval(dmin, 1.0, 1.0) ==
        doctest::Approx(dmin).epsilon(1e-12));
  CHECK(DynamicMarginalization::update_interval(dmin, 1.05, 1.0) ==
        doctest::Approx(1.1).epsilon(1e-12));
  CHECK(DynamicMarginalization::update_interval(dmin, 0.9, 1.0) ==
        doctest::Approx(dmin).epsilon(1e-12));
  // symmetric option folds the ratio
  CHECK(DynamicMarginalization::update_interval(dmin, 1.0, 1.05, true) ==
        doctest::Approx(1.1).epsilon(1e-12));
  CHECK(DynamicMarginalization::update_interval(dmin, 1.2, 1.0) ==
        doctest::Approx(std::pow(dmin, 4)).epsilon(1e-12));
}

TEST_CASE("constrain: literal transitions") {
  DynMargConfig cfg;
  DynamicMarginalization dyn(1.0, cfg);

  // inside the interval, same side: nothing happens
  auto tr = dyn.replay(0, 1.02, 0);
  CHECK(tr.side_change);  // first event flips to the upper side
  tr = dyn.replay(1, 1.03, 1);
  CHECK_FALSE(tr.side_change);
  CHECK_FALSE(tr.upper_exceeded);
  CHECK_FALSE(tr.lower_exceeded);
  CHECK(dyn.s_middle() == 1.0);

  // crossing from above to below resets only M_half
  tr = dyn.replay(2, 0.99, 2);
  CHECK(tr.side_change);
  CHECK_FALSE(tr.upper_exceeded);
  CHECK(dyn.s_middle() == 1.0);

  // upper boundary exceeded: middle moves by d_i
  DynamicMarginalization dyn2(1.0, cfg);
  dyn2.replay(0, 1.02, 0);
  dyn2.replay(1, 1.04, 1);  // ratios stay below d_min, d_i = sqrt(1.1)
  const double d = dyn2.current_d();
  CHECK(d == doctest::Approx(std::sqrt(1.1)).epsilon(1e-12));
  tr = dyn2.replay(2, 1.08, 2);  // above s_middle * d_i
  CHECK(tr.upper_exceeded);
  CHECK(dyn2.s_middle() == doctest::Approx(std::sqrt(1.1)).epsilon(1e-12));
}

TEST_CASE("dynamic marginalization on mock factor graphs") {
  std::mt19937_64 rng(67);
  DynamicMarginalization dyn(1.0, DynMargConfig{});

  // Fig-4-style scale trace: drift from 1.0 toward ~3.5 with oscillations
  std::vector<double> scales;
  for (int k = 0; k < 60; ++k) {
    const double s =
        std::min(3.5, std::exp(0.035 * k)) * (1.0 + 0.03 * std::sin(k / 2.5));
    scales.push_back(s);
  }

  int upper_events = 0, side_events = 0;
  for (int k = 0; k < int(scales.size()); ++k) {
    const int fid = k;
    const VarKey fa = velocity_key(fid), fb = velocity_key(fid + 1);

    DynamicMarginalization::EventInput in;
    in.frame_id = fid;
    in.t = Timestamp(k) * 1000;
    in.s_curr = scales[size_t(k)];
    in.has_inertial = true;
    in.visual_factors = [&, fa, fb](const ValueMap&) {
      std::mt19937_64 r2(1000 + fid);
      return random_linear_system(r2, {fa, fb}, 12);
    };
    in.metric_factors = [&, fa, fb](const ValueMap&) {
      std::mt19937_64 r2(2000 + fid);
      return random_linear_system(r2, {fa, fb, sg_key()}, 16);
    };
    in.current_values = vector_values({fa, fb, sg_key()});
    in.drop_vars = {fa};

    dyn.on_keyframe_marginalized(in);

    std::string why;
    CHECK_MESSAGE(dyn.check_invariants(in.s_curr, &why), why);
    CHECK_FALSE(dyn.visual().layout.contains(sg_key()));
    CHECK(dyn.visual().inertial_frames.empty());

    const auto& tr = dyn.transitions().back();
    if (tr.upper_exceeded) ++upper_events;
    if (tr.side_change) ++side_events;
    // the interval rule prevents simultaneous side change and boundary swap
    CHECK_FALSE((tr.side_change && (tr.upper_exceeded || tr.lower_exceeded)));
    // after an inertial event, M_curr retains inertial content unless a
    // cascade reset it wholesale
    if (!tr.cascade) CHECK(!dyn.curr().inertial_frames.empty());
  }
  CHECK(upper_events >= 5);
  CHECK(side_events >= 2);
}

TEST_CASE("linear regime: optimizing under M_curr equals the dense solve") {
  std::mt19937_64 rng(71);
  // three frames, factors (0,1) and (1,2), plus sg coupling
  const VarKey f0 = velocity_key(0), f1 = velocity_key(1),
               f2 = velocity_key(2);
  std::mt19937_64 ra(301), rb(302);
  const LinearSystem f01 = random_linear_system(ra, {f0, f1, sg_key()}, 16);
  const LinearSystem f12 = random_linear_system(rb, {f1, f2, sg_key()}, 16);

  // dense joint solve
  LinearSystem joint;
  joint.layout.add(f0);
  joint.layout.add(f1);
  joint.layout.add(f2);
  joint.layout.add(sg_key());
  joint.init();
  joint.accumulate(f01);
  joint.accumulate(f12);
  const VecX dense = joint.h.ldlt().solve(joint.b);

  // marginalize frame 0 out of f01, then solve prior + f12
  const ValueMap vals = vector_values({f0, f1, f2, sg_key()});
  const auto prior = schur_marginalize(f01, {f0}, vals);

  LinearSystem red;
  red.layout.add(f1);
  red.layout.add(f2);
  red.layout.add(sg_key());
  red.init();
  red.accumulate(f12);
  const auto pc = prior_energy(prior, vals);
  for (const VarKey& ka : prior.layout.keys()) {
    const int oa = prior.layout.offset(ka);
    red.add_b(ka, pc.b.segment(oa, var_dim(ka.kind)));
    for (const VarKey& kb : prior.layout.keys()) {
      const int ob = prior.layout.offset(kb);
      red.add_h(ka, kb, pc.h.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
    }
  }
  const VecX reduced = red.h.ldlt().solve(red.b);

  for (const VarKey& k : {f1, f2, sg_key()}) {
    CHECK((dense.segment(joint.layout.offset(k), var_dim(k.kind)) -
           reduced.segment(red.layout.offset(k), var_dim(k.kind)))
              .norm() < 1e-6);
  }
}
