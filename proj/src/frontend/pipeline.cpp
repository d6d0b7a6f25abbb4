#include "svio/frontend/pipeline.hpp"

#include <algorithm>

#include "svio/optimize/j_rel.hpp"
#include "svio/vision/point_selection.hpp"

namespace svio {

namespace {

MarginalizationPrior make_seed(const FullState& state, bool visual_only) {
  MarginalizationPrior p = MarginalizationPrior::make_empty();
  const FrameState& f0 = state.frames.front();
  const FrameState& f1 = state.frames.back();
  const int id0 = f0.id;
  p.layout.add(pose_key(id0));
  p.layout.add(affine_key(id0));
  // pinning the second bootstrap pose anchors the map's own scale, so the
  // metric scale converges through the scale/gravity variable alone
  p.layout.add(pose_key(f1.id));
  if (!visual_only) {
    p.layout.add(velocity_key(id0));
    p.layout.add(bias_key(id0));
  }
  const int n = p.layout.dim();
  p.h_star = MatXX::Zero(n, n);
  p.b_star = VecX::Zero(n);
  p.h_star.block(0, 0, 6, 6) = 1e8 * Mat66::Identity();
  p.h_star.block(6, 6, 2, 2) = 1e4 * Mat22::Identity();
  p.h_star.block(8, 8, 6, 6) = 1e6 * Mat66::Identity();
  if (!visual_only) {
    p.h_star.block(14, 14, 3, 3) = Mat33::Identity();
    Vec6 bw;
    bw << 1e2, 1e2, 1e2, 10.0, 10.0, 10.0;
    p.h_star.block(17, 17, 6, 6) = bw.asDiagonal();
  }
  p.lin_point.emplace(pose_key(id0), StateValue::from_pose(f0.t_cam_w));
  p.lin_point.emplace(affine_key(id0), StateValue::from_vector(
                                           VarKind::Affine, f0.affine.vector()));
  p.lin_point.emplace(pose_key(f1.id), StateValue::from_pose(f1.t_cam_w));
  if (!visual_only) {
    p.lin_point.emplace(velocity_key(id0), StateValue::from_vector(
                                               VarKind::Velocity, f0.velocity));
    p.lin_point.emplace(bias_key(id0), StateValue::from_vector(
                                           VarKind::Bias, f0.bias.vector()));
  }
  p.fej = p.lin_point;
  return p;
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const Config& c) {
  PipelineConfig p;
  p.opt.lambda_photo = c.get_double("lambda_photo", p.opt.lambda_photo);
  p.opt.window_size = c.get_int("window_size", p.opt.window_size);
  p.opt.max_iterations = c.get_int("max_iterations", p.opt.max_iterations);
  p.opt.lm_initial = c.get_double("lm_initial", p.opt.lm_initial);
  p.opt.huber_gamma = c.get_double("huber_gamma", p.opt.huber_gamma);
  p.opt.gradient_weight_c =
      c.get_double("gradient_weight_c", p.opt.gradient_weight_c);
  p.opt.point_count = c.get_int("point_count", p.opt.point_count);
  p.opt.outlier_energy = c.get_double("outlier_energy", p.opt.outlier_energy);
  p.opt.optimize_intrinsics =
      c.get_bool("optimize_intrinsics", p.opt.optimize_intrinsics);
  if (c.has("pattern") && c.get_int("pattern", kPatternSize) != kPatternSize)
    throw std::runtime_error("config: only the 8-point pattern is built in");

  p.kf_max_interval = c.get_double("kf_max_interval", p.kf_max_interval);
  p.kf_flow_threshold = c.get_double("kf_flow_threshold", p.kf_flow_threshold);
  p.kf_brightness_threshold =
      c.get_double("kf_brightness_threshold", p.kf_brightness_threshold);
  p.pyramid_levels = c.get_int("pyramid_levels", p.pyramid_levels);
  const std::string mode = c.get_string("mode", "sequential");
  if (mode != "sequential" && mode != "concurrent")
    throw std::runtime_error("config: mode must be sequential or concurrent");
  p.concurrent = mode == "concurrent";
  p.gravity_samples = c.get_int("gravity_samples", p.gravity_samples);

  p.init.point_count = c.get_int("init_point_count", p.init.point_count);
  p.init.min_parallax_px =
      c.get_double("init_min_parallax", p.init.min_parallax_px);
  p.init.pyramid_levels = p.pyramid_levels;
  p.init.huber_gamma = p.opt.huber_gamma;
  p.init.gradient_weight_c = p.opt.gradient_weight_c;

  p.tracker.pyramid_levels = p.pyramid_levels;
  p.tracker.lambda_photo = p.opt.lambda_photo;
  p.tracker.huber_gamma = p.opt.huber_gamma;
  p.tracker.gradient_weight_c = p.opt.gradient_weight_c;
  p.tracker.energy_fail_threshold =
      c.get_double("tracker_fail_energy", p.tracker.energy_fail_threshold);

  p.dyn.symmetric_interval =
      c.get_bool("symmetric_interval", p.dyn.symmetric_interval);

  p.depth_search_min = c.get_double("depth_search_min", p.depth_search_min);
  p.depth_search_max = c.get_double("depth_search_max", p.depth_search_max);
  p.depth_search_steps = c.get_int("depth_search_steps", p.depth_search_steps);
  return p;
}

Pipeline::Pipeline(PipelineConfig cfg, CameraModel cam, Se3 t_imu_cam,
                   NoiseConfig noise)
    : cfg_(cfg),
      cam_(cam),
      t_imu_cam_(t_imu_cam),
      noise_(noise),
      initializer_(cfg.init, cam),
      tracker_(
          [&] {
            TrackerConfig t = cfg.tracker;
            t.noise = noise;
            t.gravity = cfg.opt.gravity;
            return t;
          }(),
          cam, t_imu_cam),
      optimizer_([&] {
        OptimizerConfig o = cfg.opt;
        o.noise = noise;
        return o;
      }()) {
  cam_.validate();
}

Pipeline::~Pipeline() {
  if (worker_.joinable()) worker_.join();
}

void Pipeline::process_imu(const ImuMeasurement& m) {
  if (!imu_.empty() && m.t <= imu_.back().t)
    throw std::invalid_argument("Pipeline: imu timestamps must increase");
  imu_.push_back(m);
}

void Pipeline::wait_for_backend() {
  if (!job_running_) return;
  if (worker_.joinable()) worker_.join();
  job_running_ = false;
  adopt_backend(std::move(job_result_));
}

void Pipeline::adopt_backend(BackendResult&& r) {
  if (!r.ok) return;
  state_ = std::move(r.state);
  factors_ = std::move(r.factors);
  dyn_ = std::move(r.dyn);
  for (const auto& row : r.scale_rows) estimate_.scale_rows.push_back(row);
  estimate_.final_sg = state_.sg;

  const FrameState* newest = state_.find_frame(r.newest_id);
  if (newest) {
    // the keyframe's trajectory row gets the optimized pose
    for (auto it = estimate_.rows.rbegin(); it != estimate_.rows.rend(); ++it) {
      if (it->t == newest->t) {
        it->t_w_cam = newest->t_cam_w.inverse();
        break;
      }
    }
    tracker_.reinitialize(state_, r.newest_id);
    prev_frame_t_ = newest->t;
  }
}

void Pipeline::process_frame(const Image& img, Timestamp t) {
  auto pyr = std::make_shared<ImagePyramid>(img, cfg_.pyramid_levels);

  if (job_running_ && job_done_.load()) wait_for_backend();

  if (mode_ == Mode::initializing) {
    bootstrap(pyr, t);
    return;
  }

  if (!estimate_.rows.empty()) {
    const Timestamp prev = estimate_.rows.back().t;
    if (t > prev) frame_period_ = seconds_between(prev, t);
  }

  const auto imu = slice_measurements(imu_, prev_frame_t_, t);
  const TrackResult result = tracker_.track(pyr, t, imu);
  if (!result.ok) {
    drop_lost_track(pyr, t);
    return;
  }
  prev_frame_t_ = t;
  estimate_.rows.push_back({t, result.t_cam_w.inverse()});

  const double dt_kf = seconds_between(last_kf_t_, t);
  const bool need_kf = dt_kf + frame_period_ >= cfg_.kf_max_interval ||
                       result.mean_flow_px >= cfg_.kf_flow_threshold ||
                       result.brightness_change >= cfg_.kf_brightness_threshold;
  if (need_kf) on_new_keyframe(pyr, t, result);
}

void Pipeline::finish() { wait_for_backend(); }

void Pipeline::drop_lost_track(const std::shared_ptr<const ImagePyramid>& pyr,
                               Timestamp t) {
  wait_for_backend();
  ++reinit_count_;
  mode_ = Mode::initializing;
  state_ = FullState{};
  factors_ = WindowFactors{};
  dyn_.reset();
  initializer_.set_first(pyr, t);
}

void Pipeline::bootstrap(const std::shared_ptr<const ImagePyramid>& pyr,
                         Timestamp t) {
  if (!initializer_.has_first()) {
    initializer_.set_first(pyr, t);
    return;
  }
  // gyro-integrated rotation between the two candidate frames
  const Quat* hint = nullptr;
  Quat rel_rot = Quat::Identity();
  const auto gyro_slice =
      slice_measurements(imu_, initializer_.first_timestamp(), t);
  if (gyro_slice.size() >= 2) {
    const auto preint = preintegrate(gyro_slice, ImuBias{}, noise_, 1e9);
    const Quat r_ic = t_imu_cam_.rotation();  // cam -> imu
    rel_rot = (r_ic.conjugate() * preint.delta_rotation().conjugate() * r_ic)
                  .normalized();
    hint = &rel_rot;
  }
  const auto attempt = initializer_.try_frame(pyr, t, hint);
  if (attempt.success) {
    build_initial_state(attempt, pyr, t);
    return;
  }
  if (attempt.valid_points < 12 ||
      seconds_between(initializer_.first_timestamp(), t) >
          cfg_.init_restart_after) {
    initializer_.set_first(pyr, t);  // retry from the current frame
  }
}

void Pipeline::build_initial_state(
    const TwoFrameInitializer::Attempt& attempt,
    const std::shared_ptr<const ImagePyramid>& pyr, Timestamp t) {
  const Timestamp t0 = initializer_.first_timestamp();

  // depths normalized so that the average depth is one
  double mean_depth = 0.0;
  for (const auto& [px, d] : attempt.points) mean_depth += 1.0 / d;
  mean_depth /= double(attempt.points.size());

  FullState st;
  st.cam = cam_;
  st.t_imu_cam = t_imu_cam_;

  FrameState f0;
  f0.id = 0;
  f0.t = t0;
  f0.pyramid = initializer_.first_pyramid();
  for (const auto& [px, d] : attempt.points) {
    HostedPoint pt;
    pt.pixel = px;
    pt.idepth = d * mean_depth;
    f0.points.push_back(pt);
  }

  FrameState f1;
  f1.id = 1;
  f1.t = t;
  f1.pyramid = pyr;
  Se3 rel = attempt.t_cam1_cam0;
  rel.translation() /= mean_depth;
  f1.t_cam_w = rel;  // the first camera frame is the DSO world
  f1.affine = attempt.affine1;

  st.frames.push_back(std::move(f0));
  st.frames.push_back(std::move(f1));

  // gravity direction from averaging up to 40 accelerometer measurements
  Vec3 accel_sum = Vec3::Zero();
  int n_avg = 0;
  for (const ImuMeasurement& m : imu_) {
    if (m.t < t0) continue;
    accel_sum += m.accel;
    if (++n_avg >= cfg_.gravity_samples) break;
  }
  if (n_avg == 0)
    throw std::runtime_error("Pipeline: no imu data for gravity alignment");
  const Vec3 u_imu = accel_sum.normalized();
  const Vec3 a = t_imu_cam_.inverse().rotation() * u_imu;
  st.sg.q_md = Quat::FromTwoVectors(a, Vec3::UnitZ()).normalized();
  st.sg.log_scale = 0.0;  // scale starts at 1, velocity and biases at zero
  st.sg_anchor = st.sg;
  st.has_sg_anchor = true;

  WindowFactors factors;
  InertialLink link;
  link.id_a = 0;
  link.id_b = 1;
  link.raw = slice_measurements(imu_, t0, t);
  if (link.raw.size() >= 2) {
    link.preint = preintegrate(link.raw, ImuBias{}, noise_, 10.0);
    factors.links.push_back(std::move(link));
  }

  DynamicMarginalization dyn(1.0, cfg_.dyn);
  dyn.seed(make_seed(st, true), make_seed(st, false));

  next_kf_id_ = 2;
  mode_ = Mode::tracking;
  last_kf_t_ = t;
  prev_frame_t_ = t;

  estimate_.rows.push_back({t0, st.frames[0].t_cam_w.inverse()});
  estimate_.rows.push_back({t, st.frames[1].t_cam_w.inverse()});
  estimate_.t_imu_cam = t_imu_cam_;

  BackendResult r =
      run_backend(std::move(st), std::move(factors), std::move(dyn), 1, t);
  adopt_backend(std::move(r));
  // the second bootstrap keyframe hosts its own points as well
  activate_points(state_.frames[1], state_.frames[0]);
  tracker_.reinitialize(state_, 1);
  initializer_.reset();
}

void Pipeline::activate_points(FrameState& host, const FrameState& ref) const {
  const Se3 t_ref_host = ref.t_cam_w * host.t_cam_w.inverse();
  const Image& host_img = host.image(0);
  const Image& ref_img = ref.image(0);
  const double kappa = std::exp(ref.affine.a - host.affine.a);

  const auto pattern_cost = [&](const Vec2& px, double idepth, bool* ok) {
    double cost = 0.0;
    int n = 0;
    for (int k = 0; k < kPatternSize; ++k) {
      const Vec2 p = px + pattern_offsets()[k];
      const Reprojection r = reproject(p, idepth, t_ref_host, cam_);
      if (!r.valid || !cam_.in_image(r.pixel, kPatternMargin)) {
        *ok = false;
        return 1e30;
      }
      const double ih = host_img.interp(p.x(), p.y());
      const double ir = ref_img.interp(r.pixel.x(), r.pixel.y());
      const double res =
          (ir - ref.affine.b) - kappa * (ih - host.affine.b);
      cost += res * res;
      ++n;
    }
    *ok = n == kPatternSize;
    return cost / std::max(n, 1);
  };

  for (const Vec2& px : select_points(host_img, optimizer_.config().point_count)) {
    double best_cost = 1e30;
    double best_log_d = 0.0;
    const double lmin = std::log(cfg_.depth_search_min);
    const double lmax = std::log(cfg_.depth_search_max);
    const int steps = std::max(cfg_.depth_search_steps, 8);
    std::vector<double> costs(size_t(steps), 1e30);
    for (int i = 0; i < steps; ++i) {
      const double ld = lmin + (lmax - lmin) * i / (steps - 1);
      bool ok = false;
      const double c = pattern_cost(px, std::exp(ld), &ok);
      if (ok) costs[size_t(i)] = c;
      if (ok && c < best_cost) {
        best_cost = c;
        best_log_d = ld;
      }
    }
    if (best_cost > cfg_.depth_search_max_cost) continue;

    // parabolic refinement on the log-inverse-depth grid
    const double step = (lmax - lmin) / (steps - 1);
    const int bi = int(std::lround((best_log_d - lmin) / step));
    if (bi > 0 && bi + 1 < steps && costs[size_t(bi - 1)] < 1e29 &&
        costs[size_t(bi + 1)] < 1e29) {
      const double c0 = costs[size_t(bi - 1)], c1 = costs[size_t(bi)],
                   c2 = costs[size_t(bi + 1)];
      const double denom = c0 - 2.0 * c1 + c2;
      if (denom > 1e-12) {
        const double offset = 0.5 * (c0 - c2) / denom;
        if (std::abs(offset) <= 1.0) best_log_d += offset * step;
      }
    }

    // a few 1-d Gauss-Newton polish steps on the inverse depth
    double idepth = std::exp(best_log_d);
    {
      PhotometricSettings st;
      st.huber_gamma = optimizer_.config().huber_gamma;
      st.gradient_weight_c = optimizer_.config().gradient_weight_c;
      PhotometricInput in;
      in.host = &host_img;
      in.target = &ref_img;
      in.cam = cam_;
      in.pixel = px;
      in.t_host_cam_w = host.t_cam_w;
      in.t_target_cam_w = ref.t_cam_w;
      in.aff_host = host.affine;
      in.aff_target = ref.affine;
      for (int it = 0; it < 4; ++it) {
        in.idepth = idepth;
        const PhotometricEval ev = evaluate_photometric(in, st);
        if (!ev.valid) break;
        const double h = (ev.weight.asDiagonal() * ev.j_idepth)
                             .dot(ev.j_idepth);
        const double b = -(ev.weight.asDiagonal() * ev.j_idepth).dot(ev.r);
        if (h < 1e-9) break;
        const double step = std::clamp(b / h, -0.3 * idepth, 0.3 * idepth);
        idepth = std::clamp(idepth + step, cfg_.depth_search_min,
                            cfg_.depth_search_max);
        if (std::abs(step) < 1e-8) break;
      }
    }

    HostedPoint pt;
    pt.pixel = px;
    pt.idepth = idepth;
    host.points.push_back(pt);
  }
}

int Pipeline::select_victim() const {
  // keep the two newest keyframes; drop the most redundant of the rest
  const size_t n = state_.frames.size();
  if (n <= 2) return -1;
  const Vec3 newest = state_.frames[n - 1].t_cam_w.inverse().translation();
  double best_score = -1.0;
  int victim = -1;
  for (size_t i = 0; i + 2 < n; ++i) {
    const Vec3 pi = state_.frames[i].t_cam_w.inverse().translation();
    double sum = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec3 pj = state_.frames[j].t_cam_w.inverse().translation();
      sum += 1.0 / ((pi - pj).norm() + 1e-5);
    }
    const double score = std::sqrt((pi - newest).norm()) * sum;
    if (score > best_score) {
      best_score = score;
      victim = state_.frames[i].id;
    }
  }
  return victim;
}

Pipeline::BackendResult Pipeline::run_backend(
    FullState state, WindowFactors factors,
    std::optional<DynamicMarginalization> dyn, int newest_id,
    Timestamp t) const {
  BackendResult out;
  const MarginalizationPrior* prior = dyn ? &dyn->curr() : nullptr;

  optimizer_.optimize(state, factors, prior);
  optimizer_.update_point_stats(state);
  optimizer_.cull_outliers(state);

  // marginalize while over capacity
  while (dyn && int(state.frames.size()) > optimizer_.config().window_size) {
    // victim selection against the local copy
    const size_t n = state.frames.size();
    const Vec3 newest_p = state.frames[n - 1].t_cam_w.inverse().translation();
    double best_score = -1.0;
    int victim = -1;
    for (size_t i = 0; i + 2 < n; ++i) {
      const Vec3 pi = state.frames[i].t_cam_w.inverse().translation();
      double sum = 0.0;
      for (size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const Vec3 pj = state.frames[j].t_cam_w.inverse().translation();
        sum += 1.0 / ((pi - pj).norm() + 1e-5);
      }
      const double score = std::sqrt((pi - newest_p).norm()) * sum;
      if (score > best_score) {
        best_score = score;
        victim = state.frames[i].id;
      }
    }
    if (victim < 0) break;

    bool has_inertial = false;
    for (const auto& link : factors.links)
      if (link.id_a == victim || link.id_b == victim) has_inertial = true;

    DynamicMarginalization::EventInput in;
    in.frame_id = victim;
    in.t = t;
    in.s_curr = state.sg.scale();
    in.has_inertial = has_inertial;
    in.visual_factors = [&](const ValueMap& fej) {
      return optimizer_.linearize_visual_for_marg(state, victim, fej);
    };
    in.metric_factors = [&](const ValueMap& fej) {
      return optimizer_.linearize_metric_for_marg(state, factors, victim, fej);
    };
    in.current_values = optimizer_.snapshot_values(state);
    for (const VarKey& k :
         {pose_key(victim), velocity_key(victim), bias_key(victim),
          affine_key(victim)})
      in.drop_vars.insert(k);

    dyn->on_keyframe_marginalized(in);

    // remove the frame and its links from the live window
    std::erase_if(factors.links, [&](const InertialLink& l) {
      return l.id_a == victim || l.id_b == victim;
    });
    std::erase_if(state.frames,
                  [&](const FrameState& f) { return f.id == victim; });
  }

  if (dyn) {
    const auto& tr = dyn->transitions();
    TrajectoryEstimate::ScaleRow row;
    row.t = t;
    row.s_curr = state.sg.scale();
    row.s_middle = dyn->s_middle();
    row.upper = dyn->s_middle() * dyn->current_d();
    row.lower = dyn->s_middle() / dyn->current_d();
    if (!tr.empty() && tr.back().t == t) {
      const auto& last = tr.back();
      row.transition = (last.side_change ? 1 : 0) |
                       (last.upper_exceeded ? 2 : 0) |
                       (last.lower_exceeded ? 4 : 0) | (last.cascade ? 8 : 0);
    }
    out.scale_rows.push_back(row);
  }

  out.state = std::move(state);
  out.factors = std::move(factors);
  out.dyn = std::move(dyn);
  out.newest_id = newest_id;
  out.ok = true;
  return out;
}

void Pipeline::on_new_keyframe(const std::shared_ptr<const ImagePyramid>& pyr,
                               Timestamp t, const TrackResult& track) {
  wait_for_backend();

  FrameState f;
  f.id = next_kf_id_++;
  f.t = t;
  f.t_cam_w = track.t_cam_w;
  f.velocity = track.velocity;
  f.bias = track.bias;
  f.affine = track.affine;
  f.pyramid = pyr;

  const FrameState& ref = state_.frames.back();
  activate_points(f, ref);

  InertialLink link;
  link.id_a = ref.id;
  link.id_b = f.id;
  link.raw = slice_measurements(imu_, ref.t, t);
  const ImuBias link_bias = ref.bias;
  const int newest = f.id;

  state_.frames.push_back(std::move(f));
  if (link.raw.size() >= 2) {
    link.preint = preintegrate(link.raw, link_bias, noise_, 10.0);
    factors_.links.push_back(std::move(link));
  }
  last_kf_t_ = t;

  if (cfg_.concurrent) {
    job_done_.store(false);
    job_running_ = true;
    FullState st = state_;
    WindowFactors fs = factors_;
    std::optional<DynamicMarginalization> dyn = dyn_;
    if (worker_.joinable()) worker_.join();
    worker_ = std::thread([this, st = std::move(st), fs = std::move(fs),
                           dyn = std::move(dyn), newest, t]() mutable {
      job_result_ =
          run_backend(std::move(st), std::move(fs), std::move(dyn), newest, t);
      job_done_.store(true);
    });
  } else {
    BackendResult r = run_backend(std::move(state_), std::move(factors_),
                                  std::move(dyn_), newest, t);
    adopt_backend(std::move(r));
  }
}

}  // namespace svio
