#pragma once

#include "svio/optimize/variables.hpp"

namespace svio {

// Dense Gauss-Newton normal equations H * delta = b over a variable layout,
// with b = -J^T W r. `energy` carries the summed residual energy of the
// factors accumulated into the system.
struct LinearSystem {
  VariableLayout layout;
  MatXX h;
  VecX b;
  double energy = 0.0;

  void init() {
    h = MatXX::Zero(layout.dim(), layout.dim());
    b = VecX::Zero(layout.dim());
    energy = 0.0;
  }

  template <typename Derived>
  void add_h(const VarKey& row, const VarKey& col,
             const Eigen::MatrixBase<Derived>& blk) {
    h.block(layout.offset(row), layout.offset(col), var_dim(row.kind),
            var_dim(col.kind)) += blk;
  }

  template <typename Derived>
  void add_b(const VarKey& row, const Eigen::MatrixBase<Derived>& v) {
    b.segment(layout.offset(row), var_dim(row.kind)) += v;
  }

  void symmetrize() { h = (0.5 * (h + h.transpose())).eval(); }

  // Adds another system's blocks (its layout must be a subset by key).
  void accumulate(const LinearSystem& other) {
    for (const VarKey& ka : other.layout.keys()) {
      const int oa = other.layout.offset(ka);
      add_b(ka, other.b.segment(oa, var_dim(ka.kind)));
      for (const VarKey& kb : other.layout.keys()) {
        const int ob = other.layout.offset(kb);
        add_h(ka, kb,
              other.h.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
      }
    }
    energy += other.energy;
  }
};

}  // namespace svio
