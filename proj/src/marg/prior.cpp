#include "svio/marg/prior.hpp"

#include <Eigen/Dense>

namespace svio {

MarginalizationPrior schur_marginalize(const LinearSystem& sys,
                                       const std::set<VarKey>& drop,
                                       const ValueMap& values,
                                       const ValueMap& inherited_fej) {
  std::vector<VarKey> keep_keys, drop_keys;
  for (const VarKey& k : sys.layout.keys()) {
    (drop.count(k) ? drop_keys : keep_keys).push_back(k);
  }

  MarginalizationPrior out;
  for (const VarKey& k : keep_keys) out.layout.add(k);

  const int nk = out.layout.dim();
  int nd = 0;
  for (const VarKey& k : drop_keys) nd += var_dim(k.kind);

  // gather permuted blocks
  MatXX h_kk(nk, nk), h_kd(nk, nd), h_dd(nd, nd);
  VecX b_k(nk), b_d(nd);
  {
    std::vector<int> keep_src, drop_src;  // source offsets per scalar row
    keep_src.reserve(nk);
    drop_src.reserve(nd);
    for (const VarKey& k : keep_keys) {
      const int o = sys.layout.offset(k);
      for (int i = 0; i < var_dim(k.kind); ++i) keep_src.push_back(o + i);
    }
    for (const VarKey& k : drop_keys) {
      const int o = sys.layout.offset(k);
      for (int i = 0; i < var_dim(k.kind); ++i) drop_src.push_back(o + i);
    }
    for (int r = 0; r < nk; ++r) {
      b_k[r] = sys.b[keep_src[r]];
      for (int c = 0; c < nk; ++c) h_kk(r, c) = sys.h(keep_src[r], keep_src[c]);
      for (int c = 0; c < nd; ++c) h_kd(r, c) = sys.h(keep_src[r], drop_src[c]);
    }
    for (int r = 0; r < nd; ++r) {
      b_d[r] = sys.b[drop_src[r]];
      for (int c = 0; c < nd; ++c) h_dd(r, c) = sys.h(drop_src[r], drop_src[c]);
    }
  }

  if (nd == 0) {
    out.h_star = 0.5 * (h_kk + h_kk.transpose());
    out.b_star = b_k;
    out.energy_const = sys.energy;
  } else {
    h_dd = 0.5 * (h_dd + h_dd.transpose()).eval();
    Eigen::LDLT<MatXX> ldlt(h_dd);
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
      const VecX dvec = ldlt.vectorD();
      const double dmax = dvec.cwiseAbs().maxCoeff();
      if (!(dvec.minCoeff() > dmax * 1e-12) || dmax == 0.0) ok = false;
    }
    if (!ok) {
      const double dmax = h_dd.diagonal().cwiseAbs().maxCoeff();
      h_dd += std::max(1e-10, 1e-12 * dmax) * MatXX::Identity(nd, nd);
      ldlt.compute(h_dd);
      out.regularized = true;
      if (ldlt.info() != Eigen::Success)
        throw std::runtime_error(
            "schur_marginalize: irrecoverably singular drop block");
    }
    MatXX hdd_inv_hdk = ldlt.solve(h_kd.transpose());
    VecX hdd_inv_bd = ldlt.solve(b_d);
    if (!hdd_inv_bd.allFinite() || !hdd_inv_hdk.allFinite()) {
      // escalate the ridge before giving up
      const double dmax = h_dd.diagonal().cwiseAbs().maxCoeff();
      h_dd += std::max(1e-6, 1e-9 * dmax) * MatXX::Identity(nd, nd);
      ldlt.compute(h_dd);
      out.regularized = true;
      hdd_inv_hdk = ldlt.solve(h_kd.transpose());
      hdd_inv_bd = ldlt.solve(b_d);
      if (!hdd_inv_bd.allFinite() || !hdd_inv_hdk.allFinite())
        throw std::runtime_error(
            "schur_marginalize: irrecoverably singular drop block (dim " +
            std::to_string(nd) + ", finite " +
            std::to_string(h_dd.allFinite()) + std::to_string(b_d.allFinite()) +
            ")");
    }
    out.h_star = h_kk - h_kd * hdd_inv_hdk;
    out.h_star = 0.5 * (out.h_star + out.h_star.transpose()).eval();
    out.b_star = b_k - h_kd * hdd_inv_bd;
    // residual energy at the linearization point after eliminating the
    // dropped variables at their conditional optimum
    out.energy_const = sys.energy - b_d.dot(hdd_inv_bd);
  }

  for (const VarKey& k : keep_keys) {
    auto it = values.find(k);
    if (it == values.end())
      throw std::invalid_argument("schur_marginalize: missing value for key");
    out.lin_point.emplace(k, it->second);
    auto fit = inherited_fej.find(k);
    out.fej.emplace(k, fit != inherited_fej.end() ? fit->second : it->second);
  }
  return out;
}

PriorContribution prior_energy(const MarginalizationPrior& prior,
                               const ValueMap& current, bool relinearize) {
  const int n = prior.layout.dim();
  PriorContribution out;
  out.h = MatXX::Zero(n, n);
  out.b = VecX::Zero(n);
  if (n == 0) return out;

  VecX delta = VecX::Zero(n);
  for (const VarKey& k : prior.layout.keys()) {
    auto it = current.find(k);
    if (it == current.end())
      throw std::invalid_argument("prior_energy: missing current value");
    delta.segment(prior.layout.offset(k), var_dim(k.kind)) =
        it->second.box_minus(prior.lin_point.at(k));
  }

  out.energy = prior.energy_const - 2.0 * prior.b_star.dot(delta) +
               delta.dot(prior.h_star * delta);

  if (!relinearize) {
    out.h = prior.h_star;
    out.b = prior.b_star - prior.h_star * delta;
    return out;
  }

  // exact chart jacobian d(delta)/d(eps) at the current estimate
  MatXX j = MatXX::Identity(n, n);
  for (const VarKey& k : prior.layout.keys()) {
    const int o = prior.layout.offset(k);
    if (k.kind == VarKind::Pose) {
      j.block<6, 6>(o, o) = se3_right_jacobian_inv(delta.segment<6>(o));
    } else if (k.kind == VarKind::ScaleGravity) {
      j.block<3, 3>(o, o) = so3_right_jacobian_inv(delta.segment<3>(o));
    }
  }
  out.h = j.transpose() * prior.h_star * j;
  out.b = j.transpose() * (prior.b_star - prior.h_star * delta);
  return out;
}

}  // namespace svio
