#pragma once

#include <memory>
#include <vector>

#include "svio/common.hpp"

namespace svio {

// Grayscale image on a 0-255 scale, row major, float storage.
class Image {
 public:
  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : w_(w), h_(h), data_(size_t(w) * h, fill) {}
  Image(int w, int h, std::vector<float> data)
      : w_(w), h_(h), data_(std::move(data)) {}

  int width() const { return w_; }
  int height() const { return h_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y) { return data_[size_t(y) * w_ + x]; }
  float at(int x, int y) const { return data_[size_t(y) * w_ + x]; }
  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  double exposure = 1.0;  // seconds; 1.0 when unknown

  bool interp_in_bounds(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= w_ - 1.000001 && y <= h_ - 1.000001;
  }

  double interp(double x, double y) const {
    const int ix = int(x), iy = int(y);
    const double fx = x - ix, fy = y - iy;
    const double i00 = at(ix, iy), i10 = at(ix + 1, iy);
    const double i01 = at(ix, iy + 1), i11 = at(ix + 1, iy + 1);
    return (1 - fx) * (1 - fy) * i00 + fx * (1 - fy) * i10 +
           (1 - fx) * fy * i01 + fx * fy * i11;
  }

  // (value, d/dx, d/dy) of the bilinear surface.
  Vec3 interp_grad(double x, double y) const {
    const int ix = int(x), iy = int(y);
    const double fx = x - ix, fy = y - iy;
    const double i00 = at(ix, iy), i10 = at(ix + 1, iy);
    const double i01 = at(ix, iy + 1), i11 = at(ix + 1, iy + 1);
    Vec3 out;
    out[0] = (1 - fx) * (1 - fy) * i00 + fx * (1 - fy) * i10 +
             (1 - fx) * fy * i01 + fx * fy * i11;
    out[1] = (1 - fy) * (i10 - i00) + fy * (i11 - i01);
    out[2] = (1 - fx) * (i01 - i00) + fx * (i11 - i10);
    return out;
  }

  // Central-difference gradient magnitude at an integer pixel (interior).
  double grad_mag(int x, int y) const {
    const double gx = 0.5 * (at(x + 1, y) - at(x - 1, y));
    const double gy = 0.5 * (at(x, y + 1) - at(x, y - 1));
    return std::sqrt(gx * gx + gy * gy);
  }

  Image downsample() const;

 private:
  int w_ = 0, h_ = 0;
  std::vector<float> data_;
};

// Half-resolution pyramid; level l has dimensions floor(dims / 2^l).
class ImagePyramid {
 public:
  ImagePyramid() = default;
  ImagePyramid(Image level0, int num_levels);

  int num_levels() const { return int(levels_.size()); }
  const Image& level(int l) const { return levels_[l]; }

 private:
  std::vector<Image> levels_;
};

}  // namespace svio
