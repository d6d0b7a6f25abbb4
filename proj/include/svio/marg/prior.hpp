#pragma once

#include <set>

#include "svio/optimize/linear_system.hpp"

namespace svio {

struct InertialMargRecord {
  int frame_id = -1;
  double s_i = 1.0;  // scale estimate when the frame was marginalized
  double d_i = 1.0;  // scale-interval size at that event
};

// Quadratic prior E(x) = c - 2 b*^T d + d^T H* d with d = x [-] lin_point,
// produced by Schur elimination. Jacobians of the stored quadratic are fixed
// at construction; `fej` additionally carries the evaluation points used for
// the geometric jacobians of live factors connected to this prior.
struct MarginalizationPrior {
  VariableLayout layout;
  MatXX h_star;
  VecX b_star;
  double energy_const = 0.0;
  ValueMap lin_point;
  ValueMap fej;
  std::vector<InertialMargRecord> inertial_frames;
  bool regularized = false;

  bool empty() const { return layout.dim() == 0; }

  static MarginalizationPrior make_empty() {
    MarginalizationPrior p;
    p.h_star = MatXX::Zero(0, 0);
    p.b_star = VecX::Zero(0);
    return p;
  }
};

// Eliminates `drop` from the system around the linearization values in
// `values`. Kept variables inherit fej entries from `inherited_fej` when
// present, otherwise their current value becomes the first estimate.
// A near-singular drop block is regularized by 1e-10 I and flagged; an
// irrecoverably singular block throws.
MarginalizationPrior schur_marginalize(const LinearSystem& sys,
                                       const std::set<VarKey>& drop,
                                       const ValueMap& values,
                                       const ValueMap& inherited_fej = {});

struct PriorContribution {
  double energy = 0.0;
  MatXX h;  // ordered like prior.layout
  VecX b;
};

// Quadratic expansion of the prior at `current`. With first-estimate
// jacobians (the default) the tangent chart stays anchored at the stored
// linearization point. `relinearize` is a test-only switch that pulls the
// quadratic back through the exact chart jacobian at the current estimate,
// which destroys the preserved gauge nullspaces.
PriorContribution prior_energy(const MarginalizationPrior& prior,
                               const ValueMap& current,
                               bool relinearize = false);

}  // namespace svio
