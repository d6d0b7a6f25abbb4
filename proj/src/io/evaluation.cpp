#include "svio/io/evaluation.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace svio {

namespace {

std::pair<MatXX, MatXX> associate(const std::vector<TrajPoint>& est,
                                  const std::vector<TrajPoint>& gt,
                                  double max_dt) {
  const Timestamp tol = from_seconds(max_dt);
  std::vector<std::pair<Vec3, Vec3>> pairs;
  size_t j = 0;
  for (const TrajPoint& e : est) {
    while (j + 1 < gt.size() &&
           std::abs(gt[j + 1].t - e.t) <= std::abs(gt[j].t - e.t))
      ++j;
    if (j < gt.size() && std::abs(gt[j].t - e.t) <= tol)
      pairs.emplace_back(e.p, gt[j].p);
  }
  if (pairs.size() < 3)
    throw std::runtime_error("evaluate_ate: fewer than 3 matched timestamps");
  MatXX src(3, pairs.size()), dst(3, pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    src.col(i) = pairs[i].first;
    dst.col(i) = pairs[i].second;
  }
  return {src, dst};
}

}  // namespace

AteResult evaluate_ate(const std::vector<TrajPoint>& estimate,
                       const std::vector<TrajPoint>& ground_truth,
                       AteMode mode, double max_dt) {
  const auto [src, dst] = associate(estimate, ground_truth, max_dt);
  const bool with_scale = mode == AteMode::gt_scaled;
  const Mat44 a = Eigen::umeyama(src, dst, with_scale);

  AteResult out;
  out.matches = int(src.cols());
  const Mat33 sr = a.topLeftCorner<3, 3>();
  out.align_scale = with_scale ? std::cbrt(sr.determinant()) : 1.0;
  const Vec3 t = a.topRightCorner<3, 1>();

  double sq = 0.0;
  for (int i = 0; i < src.cols(); ++i)
    sq += (dst.col(i) - (sr * src.col(i) + t)).squaredNorm();
  out.rmse = std::sqrt(sq / double(src.cols()));
  return out;
}

double optimal_alignment_scale(const std::vector<TrajPoint>& estimate,
                               const std::vector<TrajPoint>& ground_truth,
                               double max_dt) {
  const auto [src, dst] = associate(estimate, ground_truth, max_dt);
  const double extent = (src.colwise() - src.rowwise().mean()).norm();
  if (extent < 1e-9)
    throw std::runtime_error("optimal_alignment_scale: degenerate trajectory");
  const Mat44 a = Eigen::umeyama(src, dst, true);
  return std::cbrt(a.topLeftCorner<3, 3>().determinant());
}

double scale_error_percent(const std::vector<TrajPoint>& estimate_unscaled,
                           const std::vector<TrajPoint>& ground_truth,
                           double s_est, double max_dt) {
  const double s_gt =
      optimal_alignment_scale(estimate_unscaled, ground_truth, max_dt);
  if (!(s_gt > 0.0))
    throw std::runtime_error("scale_error_percent: degenerate alignment");
  return 100.0 * std::abs(1.0 - s_est / s_gt);
}

}  // namespace svio
