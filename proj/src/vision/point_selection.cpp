#include "svio/vision/point_selection.hpp"

#include <algorithm>
#include <cmath>

namespace svio {

std::vector<Vec2> select_points(const Image& img, int target_count,
                                const PointSelectionSettings& st) {
  std::vector<Vec2> out;
  if (target_count <= 0 || img.width() < 16 || img.height() < 16) return out;

  const int m = int(st.margin);
  std::vector<double> grads;
  grads.reserve(size_t(img.width()) * img.height() / 4);
  for (int y = m; y < img.height() - m; y += 2)
    for (int x = m; x < img.width() - m; x += 2)
      grads.push_back(img.grad_mag(x, y));
  if (grads.empty()) return out;
  std::nth_element(grads.begin(), grads.begin() + grads.size() / 2,
                   grads.end());
  const double median = grads[grads.size() / 2];
  const double thr = std::max(st.min_gradient, st.adaptive_factor * median);

  const double area = double(img.width()) * img.height();
  const int cell = std::max(4, int(std::floor(std::sqrt(area / target_count))));

  struct Candidate {
    Vec2 px;
    double g;
  };
  std::vector<Candidate> cands;
  for (int cy = m; cy < img.height() - m; cy += cell) {
    for (int cx = m; cx < img.width() - m; cx += cell) {
      double best = 0.0;
      Vec2 best_px;
      const int x_end = std::min(cx + cell, img.width() - m);
      const int y_end = std::min(cy + cell, img.height() - m);
      for (int y = cy; y < y_end; ++y) {
        for (int x = cx; x < x_end; ++x) {
          const double g = img.grad_mag(x, y);
          if (g > best) {
            best = g;
            best_px = Vec2(x, y);
          }
        }
      }
      if (best > thr) cands.push_back({best_px, best});
    }
  }

  if (int(cands.size()) > target_count) {
    std::nth_element(cands.begin(), cands.begin() + target_count, cands.end(),
                     [](const Candidate& a, const Candidate& b) {
                       return a.g > b.g;
                     });
    cands.resize(target_count);
  }
  out.reserve(cands.size());
  for (const auto& c : cands) out.push_back(c.px);
  std::sort(out.begin(), out.end(), [](const Vec2& a, const Vec2& b) {
    return a.y() != b.y() ? a.y() < b.y() : a.x() < b.x();
  });
  return out;
}

}  // namespace svio
