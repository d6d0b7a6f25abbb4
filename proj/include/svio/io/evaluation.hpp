#pragma once

#include <vector>

#include "svio/common.hpp"

namespace svio {

struct TrajPoint {
  Timestamp t = 0;
  Vec3 p = Vec3::Zero();
};

enum class AteMode {
  metric,     // rigid SE(3) alignment; scale comes from the estimator
  gt_scaled,  // similarity alignment with the optimal ground-truth scale
};

struct AteResult {
  double rmse = 0.0;
  int matches = 0;
  double align_scale = 1.0;  // scale applied by the alignment (1 for metric)
};

// Associates by nearest timestamp within `max_dt` seconds and aligns the
// estimate onto the ground truth in the requested mode. Throws when fewer
// than 3 pairs match.
AteResult evaluate_ate(const std::vector<TrajPoint>& estimate,
                       const std::vector<TrajPoint>& ground_truth,
                       AteMode mode, double max_dt = 0.01);

// Optimal similarity-alignment scale of estimate onto ground truth.
double optimal_alignment_scale(const std::vector<TrajPoint>& estimate,
                               const std::vector<TrajPoint>& ground_truth,
                               double max_dt = 0.01);

// 100 * |1 - s_est / s_gt| with s_gt the optimal similarity-alignment scale
// of the unscaled estimate. Throws on degenerate (zero-extent) trajectories.
double scale_error_percent(const std::vector<TrajPoint>& estimate_unscaled,
                           const std::vector<TrajPoint>& ground_truth,
                           double s_est, double max_dt = 0.01);

}  // namespace svio
