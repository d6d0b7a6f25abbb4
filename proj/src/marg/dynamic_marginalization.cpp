#include "svio/marg/dynamic_marginalization.hpp"

#include <stdexcept>

namespace svio {

namespace {

LinearSystem prior_as_system(const MarginalizationPrior& p) {
  LinearSystem sys;
  sys.layout = p.layout;
  sys.h = p.h_star;
  sys.b = p.b_star;
  sys.energy = p.energy_const;
  return sys;
}

constexpr double kRelTol = 1e-9;

bool in_interval(double s, double lo, double hi) {
  return s >= lo * (1.0 - kRelTol) && s <= hi * (1.0 + kRelTol);
}

}  // namespace

DynamicMarginalization::DynamicMarginalization(double s0, DynMargConfig cfg)
    : cfg_(cfg),
      m_visual_(MarginalizationPrior::make_empty()),
      m_curr_(MarginalizationPrior::make_empty()),
      m_half_(MarginalizationPrior::make_empty()),
      s_middle_(s0),
      d_i_(cfg.d_min),
      s_prev_event_(s0),
      last_upper_(false) {
  if (!(s0 > 0.0))
    throw std::invalid_argument("DynamicMarginalization: s0 must be positive");
}

void DynamicMarginalization::seed(const MarginalizationPrior& visual_seed,
                                  const MarginalizationPrior& metric_seed) {
  m_visual_ = visual_seed;
  m_curr_ = metric_seed;
  m_half_ = metric_seed;
}

double DynamicMarginalization::update_interval(double d_min, double s_i,
                                               double s_prev, bool symmetric) {
  if (!(d_min > 1.0))
    throw std::invalid_argument("update_interval: d_min must exceed 1");
  if (!(s_i > 0.0) || !(s_prev > 0.0))
    throw std::invalid_argument("update_interval: scales must be positive");
  double ratio = s_i / s_prev;
  if (symmetric) ratio = std::max(ratio, 1.0 / ratio);
  double d = d_min;
  for (int j = 1; j < 1024; ++j) {
    if (ratio < d) return d;
    d *= d_min;
  }
  throw std::runtime_error("update_interval: ratio out of range");
}

void DynamicMarginalization::on_keyframe_marginalized(const EventInput& in) {
  if (in.has_inertial) {
    if (first_event_) {
      // the interval bookkeeping starts when marginalization starts; the
      // scale may already have moved away from its bootstrap value
      s_middle_ = in.s_curr;
      s_prev_event_ = in.s_curr;
      last_upper_ = false;
      first_event_ = false;
    }
    d_i_ = update_interval(cfg_.d_min, in.s_curr, s_prev_event_,
                           cfg_.symmetric_interval);
    s_prev_event_ = in.s_curr;
  }

  const auto update_prior = [&](MarginalizationPrior& prior,
                                bool with_metric) {
    LinearSystem visual = in.visual_factors(prior.fej);
    LinearSystem metric;
    if (with_metric && in.metric_factors) metric = in.metric_factors(prior.fej);

    LinearSystem sys;
    for (const VarKey& k : visual.layout.keys()) sys.layout.add(k);
    for (const VarKey& k : metric.layout.keys()) sys.layout.add(k);
    for (const VarKey& k : prior.layout.keys()) sys.layout.add(k);
    sys.init();
    sys.accumulate(visual);
    if (metric.layout.dim() > 0) sys.accumulate(metric);
    if (!prior.empty()) {
      const PriorContribution c = prior_energy(prior, in.current_values);
      for (const VarKey& ka : prior.layout.keys()) {
        const int oa = prior.layout.offset(ka);
        sys.add_b(ka, c.b.segment(oa, var_dim(ka.kind)));
        for (const VarKey& kb : prior.layout.keys()) {
          const int ob = prior.layout.offset(kb);
          sys.add_h(ka, kb,
                    c.h.block(oa, ob, var_dim(ka.kind), var_dim(kb.kind)));
        }
      }
      sys.energy += c.energy;
    }
    sys.symmetrize();

    // points hosted in the dropped frame go first, then the frame itself
    std::set<VarKey> point_keys;
    for (const VarKey& k : sys.layout.keys())
      if (k.kind == VarKind::Idepth && k.frame == in.frame_id)
        point_keys.insert(k);

    std::vector<InertialMargRecord> records = prior.inertial_frames;
    ValueMap fej_inherit = prior.fej;

    LinearSystem stage = sys;
    if (!point_keys.empty()) {
      const MarginalizationPrior inter =
          schur_marginalize(sys, point_keys, in.current_values, fej_inherit);
      stage = prior_as_system(inter);
      fej_inherit = inter.fej;
    }

    std::set<VarKey> frame_keys;
    for (const VarKey& k : stage.layout.keys())
      if (k.frame == in.frame_id) frame_keys.insert(k);

    prior = schur_marginalize(stage, frame_keys, in.current_values,
                              fej_inherit);
    prior.inertial_frames = std::move(records);
    if (with_metric && in.has_inertial)
      prior.inertial_frames.push_back({in.frame_id, in.s_curr, d_i_});
  };

  update_prior(m_visual_, false);
  update_prior(m_curr_, true);
  update_prior(m_half_, true);

  constrain(in.s_curr, in.t);
}

MargTransition DynamicMarginalization::replay(int frame_id, double s_curr,
                                              Timestamp t) {
  if (first_event_) {
    s_middle_ = s_curr;
    s_prev_event_ = s_curr;
    last_upper_ = false;
    first_event_ = false;
  }
  d_i_ = update_interval(cfg_.d_min, s_curr, s_prev_event_,
                         cfg_.symmetric_interval);
  s_prev_event_ = s_curr;
  m_curr_.inertial_frames.push_back({frame_id, s_curr, d_i_});
  m_half_.inertial_frames.push_back({frame_id, s_curr, d_i_});
  return constrain(s_curr, t);
}

MargTransition DynamicMarginalization::constrain(double s_curr, Timestamp t) {
  MargTransition tr;
  tr.t = t;
  tr.s_curr = s_curr;
  tr.d_i = d_i_;

  const bool upper = s_curr > s_middle_;
  if (upper != last_upper_) {  // side changes
    m_half_ = m_visual_;
    tr.side_change = true;
  }
  if (s_curr > s_middle_ * d_i_) {  // upper boundary exceeded
    m_curr_ = m_half_;
    m_half_ = m_visual_;
    s_middle_ *= d_i_;
    tr.upper_exceeded = true;
  }
  if (s_curr < s_middle_ / d_i_) {  // lower boundary exceeded
    m_curr_ = m_half_;
    m_half_ = m_visual_;
    s_middle_ /= d_i_;
    tr.lower_exceeded = true;
  }
  last_upper_ = upper;

  if (cfg_.enforce_invariants) {
    for (int guard = 0; guard < 4; ++guard) {
      if (!curr_interval_ok()) {
        m_curr_ = m_half_;
        m_half_ = m_visual_;
        tr.cascade = true;
        continue;
      }
      if (!half_interval_ok(s_curr)) {
        m_half_ = m_visual_;
        tr.cascade = true;
        continue;
      }
      break;
    }
  }

  tr.s_middle = s_middle_;
  tr.curr_dim = m_curr_.layout.dim();
  tr.half_dim = m_half_.layout.dim();
  tr.visual_dim = m_visual_.layout.dim();
  log_.push_back(tr);
  return tr;
}

bool DynamicMarginalization::curr_interval_ok() const {
  for (const auto& rec : m_curr_.inertial_frames) {
    if (!in_interval(rec.s_i, s_middle_ / rec.d_i, s_middle_ * rec.d_i))
      return false;
  }
  return true;
}

bool DynamicMarginalization::half_interval_ok(double s_curr) const {
  for (const auto& rec : m_half_.inertial_frames) {
    const bool ok = s_curr > s_middle_
                        ? in_interval(rec.s_i, s_middle_, s_middle_ * rec.d_i)
                        : in_interval(rec.s_i, s_middle_ / rec.d_i, s_middle_);
    if (!ok) return false;
  }
  return true;
}

bool DynamicMarginalization::check_invariants(double s_curr,
                                              std::string* why) const {
  if (!m_visual_.inertial_frames.empty()) {
    if (why) *why = "M_visual carries inertial records";
    return false;
  }
  if (!curr_interval_ok()) {
    if (why) *why = "M_curr record outside [s_middle/d_i, s_middle*d_i]";
    return false;
  }
  if (!half_interval_ok(s_curr)) {
    if (why) *why = "M_half record outside its half interval";
    return false;
  }
  return true;
}

}  // namespace svio
