#pragma once

#include <string>
#include <vector>

#include "svio/optimize/window_state.hpp"

namespace svio {

struct TrajectoryEstimate {
  struct PoseRow {
    Timestamp t = 0;
    Se3 t_w_cam;  // camera-to-world, DSO frame
  };
  struct ScaleRow {
    Timestamp t = 0;
    double s_curr = 1.0;
    double s_middle = 1.0;
    double upper = 1.0;  // s_middle * d_i
    double lower = 1.0;  // s_middle / d_i
    int transition = 0;  // bits: 1 side change, 2 upper, 4 lower, 8 cascade
  };

  std::vector<PoseRow> rows;
  std::vector<ScaleRow> scale_rows;
  ScaleGravityTransform final_sg;
  Se3 t_imu_cam;

  // positions mapped into the metric frame with the final scale/gravity
  std::vector<std::pair<Timestamp, Vec3>> metric_positions() const;
};

void write_tum_trajectory(const std::vector<TrajectoryEstimate::PoseRow>& rows,
                          const std::string& path);
std::vector<TrajectoryEstimate::PoseRow> read_tum_trajectory(
    const std::string& path);

void write_scale_trace(const std::vector<TrajectoryEstimate::ScaleRow>& rows,
                       const std::string& path);
std::vector<TrajectoryEstimate::ScaleRow> read_scale_trace(
    const std::string& path);

}  // namespace svio
