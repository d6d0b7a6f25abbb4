#pragma once

#include <optional>
#include <stdexcept>

#include "svio/geometry/se3.hpp"

namespace svio {

// Pinhole camera. Pixel coordinates refer to pixel centers.
struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
      throw std::invalid_argument("CameraModel: focal lengths must be positive");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      throw std::invalid_argument("CameraModel: principal point outside image");
  }

  // Behind-camera points (z <= 0) do not project.
  std::optional<Vec2> project(const Vec3& p) const {
    if (!(p.z() > 0.0)) return std::nullopt;
    return Vec2(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
  }

  // Ray direction with unit z.
  Vec3 unproject(const Vec2& px) const {
    return Vec3((px.x() - cx) / fx, (px.y() - cy) / fy, 1.0);
  }

  bool in_image(const Vec2& px, double margin = 0.0) const {
    return px.x() >= margin && px.y() >= margin &&
           px.x() <= width - 1.0 - margin && px.y() <= height - 1.0 - margin;
  }

  CameraModel level(int l) const {
    CameraModel c;
    const double s = 1.0 / double(1 << l);
    c.fx = fx * s;
    c.fy = fy * s;
    c.cx = (cx + 0.5) * s - 0.5;
    c.cy = (cy + 0.5) * s - 0.5;
    c.width = width >> l;
    c.height = height >> l;
    return c;
  }
};

struct Reprojection {
  bool valid = false;
  Vec2 pixel = Vec2::Zero();
  double idepth = 0.0;  // inverse depth in the target frame
};

// Maps a host pixel with inverse depth through T_target_host.
inline Reprojection reproject(const Vec2& pixel, double idepth,
                              const Se3& t_target_host,
                              const CameraModel& cam) {
  Reprojection out;
  if (!(idepth > 0.0)) return out;
  const Vec3 p_target = t_target_host * (cam.unproject(pixel) / idepth);
  const auto px = cam.project(p_target);
  if (!px) return out;
  out.valid = true;
  out.pixel = *px;
  out.idepth = 1.0 / p_target.z();
  return out;
}

}  // namespace svio
