#pragma once

#include <vector>

#include "svio/vision/image.hpp"

namespace svio {

struct PointSelectionSettings {
  double min_gradient = 8.0;       // absolute floor, intensity units/pixel
  double adaptive_factor = 1.5;    // times the median gradient magnitude
  double margin = 4.0;             // keep-out border for pattern + interp
};

// Grid-spread selection of high-gradient pixels, at most `target_count`.
// A textureless image yields fewer (possibly zero) points.
std::vector<Vec2> select_points(const Image& img, int target_count,
                                const PointSelectionSettings& st = {});

}  // namespace svio
