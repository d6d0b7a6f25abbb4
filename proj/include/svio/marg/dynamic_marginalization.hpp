#pragma once

#include <functional>
#include <set>

#include "svio/marg/prior.hpp"

namespace svio {

struct DynMargConfig {
  double d_min = std::sqrt(1.1);
  // Evaluate the interval rule on max(ratio, 1/ratio) instead of the ratio
  // as written; off by default.
  bool symmetric_interval = false;
  // Restores the scale-interval constraints by extra prior resets when a
  // scale jump between events would otherwise break them.
  bool enforce_invariants = true;
};

struct MargTransition {
  Timestamp t = 0;
  double s_curr = 1.0;
  double s_middle = 1.0;
  double d_i = 1.0;
  bool side_change = false;
  bool upper_exceeded = false;
  bool lower_exceeded = false;
  bool cascade = false;  // invariant-restoring reset beyond the literal rules
  int curr_dim = 0, half_dim = 0, visual_dim = 0;
};

// Triple-prior bookkeeping: M_visual only ever absorbs scale-independent
// factors, M_curr is the prior used by the window optimization, and M_half
// holds the recent states on the current side of the scale interval.
class DynamicMarginalization {
 public:
  struct EventInput {
    int frame_id = -1;
    Timestamp t = 0;
    double s_curr = 1.0;
    bool has_inertial = false;
    // Factor bundles touching the dropped frame, linearized with the
    // first-estimate values of the prior they feed.
    std::function<LinearSystem(const ValueMap& fej)> visual_factors;
    std::function<LinearSystem(const ValueMap& fej)> metric_factors;
    ValueMap current_values;       // values for every kept variable
    std::set<VarKey> drop_vars;    // the frame's own variable keys
  };

  explicit DynamicMarginalization(double s0, DynMargConfig cfg = {});

  void seed(const MarginalizationPrior& visual_seed,
            const MarginalizationPrior& metric_seed);

  const MarginalizationPrior& curr() const { return m_curr_; }
  const MarginalizationPrior& half() const { return m_half_; }
  const MarginalizationPrior& visual() const { return m_visual_; }

  double s_middle() const { return s_middle_; }
  double current_d() const { return d_i_; }
  bool last_upper() const { return last_upper_; }
  const std::vector<MargTransition>& transitions() const { return log_; }

  // Smallest strictly-dominating power of d_min for the event scale ratio.
  static double update_interval(double d_min, double s_i, double s_prev,
                                bool symmetric = false);

  void on_keyframe_marginalized(const EventInput& in);

  // Literal constrain-marginalization rules plus, when configured, the
  // invariant-restoring cascade. Exposed for replay-style tests.
  MargTransition constrain(double s_curr, Timestamp t);

  // Drives the state machine without any linear algebra: records the event
  // in the bookkeeping lists exactly like a real inertial marginalization.
  MargTransition replay(int frame_id, double s_curr, Timestamp t);

  bool check_invariants(double s_curr, std::string* why = nullptr) const;

 private:
  bool curr_interval_ok() const;
  bool half_interval_ok(double s_curr) const;

  DynMargConfig cfg_;
  MarginalizationPrior m_visual_, m_curr_, m_half_;
  double s_middle_;
  double d_i_;
  double s_prev_event_;
  bool last_upper_ = false;
  bool first_event_ = true;
  std::vector<MargTransition> log_;
};

}  // namespace svio
