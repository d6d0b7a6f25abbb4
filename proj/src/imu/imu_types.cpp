#include "svio/imu/imu_types.hpp"

#include <algorithm>

namespace svio {

std::vector<ImuMeasurement> slice_measurements(
    const std::vector<ImuMeasurement>& stream, Timestamp a, Timestamp b) {
  std::vector<ImuMeasurement> out;
  if (b <= a || stream.empty()) return out;
  auto interp = [&](Timestamp t, size_t hi) {
    const ImuMeasurement& m0 = stream[hi - 1];
    const ImuMeasurement& m1 = stream[hi];
    const double w = double(t - m0.t) / double(m1.t - m0.t);
    ImuMeasurement m;
    m.t = t;
    m.gyro = (1.0 - w) * m0.gyro + w * m1.gyro;
    m.accel = (1.0 - w) * m0.accel + w * m1.accel;
    return m;
  };

  auto lo = std::lower_bound(
      stream.begin(), stream.end(), a,
      [](const ImuMeasurement& m, Timestamp t) { return m.t < t; });
  if (lo == stream.end()) return out;
  if (lo->t > a && lo != stream.begin())
    out.push_back(interp(a, size_t(lo - stream.begin())));
  for (auto it = lo; it != stream.end() && it->t <= b; ++it) out.push_back(*it);
  if (!out.empty() && out.back().t < b) {
    auto hi = std::lower_bound(
        stream.begin(), stream.end(), b,
        [](const ImuMeasurement& m, Timestamp t) { return m.t < t; });
    if (hi != stream.end() && hi != stream.begin())
      out.push_back(interp(b, size_t(hi - stream.begin())));
  }
  return out;
}

}  // namespace svio
