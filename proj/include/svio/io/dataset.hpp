#pragma once

#include <memory>
#include <string>
#include <vector>

#include "svio/imu/imu_types.hpp"
#include "svio/io/config.hpp"
#include "svio/vision/camera.hpp"
#include "svio/vision/image.hpp"

namespace svio {

struct GroundTruthState {
  Timestamp t = 0;
  Se3 t_w_imu;  // body to world, metric
  Vec3 velocity = Vec3::Zero();
  ImuBias bias;
};

struct FrameRecord {
  Timestamp t = 0;
  std::string path;  // image file, empty for in-memory frames
  std::shared_ptr<const Image> inline_image;
  double exposure = 1.0;
};

// Radial-tangential distortion of the source camera; images are remapped to
// the ideal pinhole model at load time when any coefficient is nonzero.
struct DistortionModel {
  double k1 = 0, k2 = 0, p1 = 0, p2 = 0;
  bool trivial() const { return k1 == 0 && k2 == 0 && p1 == 0 && p2 == 0; }
};

struct DatasetSequence {
  std::string name;
  std::vector<FrameRecord> frames;        // time sorted
  std::vector<ImuMeasurement> imu;        // time sorted, rate >= frame rate
  std::vector<GroundTruthState> ground_truth;
  CameraModel cam;
  DistortionModel distortion;
  Se3 t_imu_cam;
  NoiseConfig noise;

  Image load_frame(size_t index) const;

  // Measurements covering [a, b] with linearly interpolated boundary samples.
  std::vector<ImuMeasurement> imu_slice(Timestamp a, Timestamp b) const;

  void validate() const;
};

// EuRoC/ASL directory layout: <path>[/mav0]/cam0/data.csv + data/,
// imu0/data.csv, state_groundtruth_estimate0/data.csv, sensor.yaml files.
DatasetSequence load_euroc(const std::string& path);

// Writes the sequence back out in the same layout (images as 8-bit PGM).
void save_euroc(const DatasetSequence& seq, const std::string& path);

}  // namespace svio
