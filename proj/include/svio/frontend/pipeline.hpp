#pragma once

#include <deque>
#include <optional>
#include <thread>

#include "svio/frontend/coarse_tracker.hpp"
#include "svio/frontend/initializer.hpp"
#include "svio/io/config.hpp"
#include "svio/io/traces.hpp"
#include "svio/marg/dynamic_marginalization.hpp"
#include "svio/optimize/window_optimizer.hpp"

namespace svio {

struct PipelineConfig {
  OptimizerConfig opt;
  InitializerConfig init;
  TrackerConfig tracker;
  DynMargConfig dyn;

  double kf_max_interval = 0.5;  // seconds between consecutive keyframes
  double kf_flow_threshold = 10.0;
  double kf_brightness_threshold = 0.25;
  int pyramid_levels = 4;
  bool concurrent = false;
  int gravity_samples = 40;

  // inverse-depth search for newly activated points
  double depth_search_min = 0.05;
  double depth_search_max = 20.0;
  int depth_search_steps = 96;
  double depth_search_max_cost = 400.0;  // mean squared pattern residual

  double init_restart_after = 5.0;  // seconds without successful bootstrap

  // merges the documented key-value options over the defaults
  static PipelineConfig from_config(const Config& c);
};

// The odometry loop: bootstrap, per-frame coarse tracking, keyframe policy,
// windowed optimization and dynamic marginalization.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, CameraModel cam, Se3 t_imu_cam,
           NoiseConfig noise);
  ~Pipeline();

  void process_imu(const ImuMeasurement& m);
  void process_frame(const Image& img, Timestamp t);
  void finish();  // drains the optimization lane in concurrent mode

  bool initialized() const { return mode_ == Mode::tracking; }
  const TrajectoryEstimate& estimate() const { return estimate_; }
  double current_scale() const { return state_.sg.scale(); }
  const FullState& window_state() const { return state_; }
  const DynamicMarginalization* dyn_marg() const {
    return dyn_ ? &*dyn_ : nullptr;
  }
  const CoarseTracker& tracker() const { return tracker_; }
  int keyframe_count() const { return next_kf_id_; }
  int reinit_count() const { return reinit_count_; }

 private:
  enum class Mode { initializing, tracking };

  struct BackendResult {
    FullState state;
    WindowFactors factors;
    std::optional<DynamicMarginalization> dyn;
    std::vector<TrajectoryEstimate::ScaleRow> scale_rows;
    int newest_id = -1;
    bool ok = false;
  };

  void bootstrap(const std::shared_ptr<const ImagePyramid>& pyr, Timestamp t);
  void build_initial_state(const TwoFrameInitializer::Attempt& attempt,
                           const std::shared_ptr<const ImagePyramid>& pyr,
                           Timestamp t);
  void on_new_keyframe(const std::shared_ptr<const ImagePyramid>& pyr,
                       Timestamp t, const TrackResult& track);
  void activate_points(FrameState& host, const FrameState& ref) const;
  int select_victim() const;
  BackendResult run_backend(FullState state, WindowFactors factors,
                            std::optional<DynamicMarginalization> dyn,
                            int newest_id, Timestamp t) const;
  void adopt_backend(BackendResult&& result);
  void wait_for_backend();
  void drop_lost_track(const std::shared_ptr<const ImagePyramid>& pyr,
                       Timestamp t);

  PipelineConfig cfg_;
  CameraModel cam_;
  Se3 t_imu_cam_;
  NoiseConfig noise_;

  Mode mode_ = Mode::initializing;
  std::vector<ImuMeasurement> imu_;
  TwoFrameInitializer initializer_;
  CoarseTracker tracker_;
  WindowOptimizer optimizer_;

  FullState state_;
  WindowFactors factors_;
  std::optional<DynamicMarginalization> dyn_;

  TrajectoryEstimate estimate_;
  int next_kf_id_ = 0;
  Timestamp last_kf_t_ = 0;
  Timestamp prev_frame_t_ = 0;
  double frame_period_ = 0.05;
  int reinit_count_ = 0;

  // concurrent mode
  std::thread worker_;
  std::atomic<bool> job_done_{false};
  bool job_running_ = false;
  BackendResult job_result_;
};

}  // namespace svio
