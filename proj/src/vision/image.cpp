#include "svio/vision/image.hpp"

#include <stdexcept>

namespace svio {

Image Image::downsample() const {
  const int nw = w_ / 2, nh = h_ / 2;
  Image out(nw, nh);
  out.exposure = exposure;
  for (int y = 0; y < nh; ++y) {
    for (int x = 0; x < nw; ++x) {
      out.at(x, y) = 0.25f * (at(2 * x, 2 * y) + at(2 * x + 1, 2 * y) +
                              at(2 * x, 2 * y + 1) + at(2 * x + 1, 2 * y + 1));
    }
  }
  return out;
}

ImagePyramid::ImagePyramid(Image level0, int num_levels) {
  if (num_levels < 1) throw std::invalid_argument("ImagePyramid: num_levels");
  levels_.reserve(num_levels);
  levels_.push_back(std::move(level0));
  for (int l = 1; l < num_levels; ++l) {
    if (levels_.back().width() < 8 || levels_.back().height() < 8) break;
    levels_.push_back(levels_.back().downsample());
  }
}

}  // namespace svio
