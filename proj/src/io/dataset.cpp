#include "svio/io/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svio/io/image_io.hpp"

namespace svio {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    // trim spaces
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

Timestamp parse_timestamp(const std::string& s, const std::string& file,
                          int row) {
  Timestamp t = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), t);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error("load_euroc: bad timestamp in " + file + " row " +
                             std::to_string(row));
  return t;
}

double parse_double(const std::string& s, const std::string& file, int row) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("load_euroc: bad number in " + file + " row " +
                             std::to_string(row));
  }
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_euroc: missing file " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    rows.push_back(split_csv(line));
  }
  if (rows.empty())
    throw std::runtime_error("load_euroc: empty file " + path);
  return rows;
}

// Minimal extraction of `key: [a, b, c, ...]` lists from EuRoC sensor.yaml
// files; lists may span multiple lines.
std::vector<double> yaml_list(const std::string& text, const std::string& key) {
  const auto kpos = text.find(key + ":");
  if (kpos == std::string::npos) return {};
  const auto open = text.find('[', kpos);
  if (open == std::string::npos) return {};
  const auto close = text.find(']', open);
  if (close == std::string::npos) return {};
  std::string body = text.substr(open + 1, close - open - 1);
  std::replace(body.begin(), body.end(), ',', ' ');
  std::replace(body.begin(), body.end(), '\n', ' ');
  std::istringstream in(body);
  std::vector<double> out;
  double v;
  while (in >> v) out.push_back(v);
  return out;
}

double yaml_scalar(const std::string& text, const std::string& key,
                   double fallback) {
  const auto kpos = text.find(key + ":");
  if (kpos == std::string::npos) return fallback;
  std::istringstream in(text.substr(kpos + key.size() + 1, 64));
  double v;
  return (in >> v) ? v : fallback;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) return "";
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Image undistort(const Image& img, const CameraModel& cam,
                const DistortionModel& d) {
  Image out(cam.width, cam.height);
  out.exposure = img.exposure;
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const double x = (u - cam.cx) / cam.fx;
      const double y = (v - cam.cy) / cam.fy;
      const double r2 = x * x + y * y;
      const double radial = 1.0 + d.k1 * r2 + d.k2 * r2 * r2;
      const double xd = x * radial + 2.0 * d.p1 * x * y + d.p2 * (r2 + 2 * x * x);
      const double yd = y * radial + d.p1 * (r2 + 2 * y * y) + 2.0 * d.p2 * x * y;
      const double us = cam.fx * xd + cam.cx;
      const double vs = cam.fy * yd + cam.cy;
      out.at(u, v) = img.interp_in_bounds(us, vs)
                         ? float(img.interp(us, vs))
                         : 0.0f;
    }
  }
  return out;
}

}  // namespace

Image DatasetSequence::load_frame(size_t index) const {
  const FrameRecord& rec = frames.at(index);
  Image img;
  if (rec.inline_image) {
    img = *rec.inline_image;
  } else {
    img = load_image(rec.path);
  }
  img.exposure = rec.exposure;
  if (!distortion.trivial()) img = undistort(img, cam, distortion);
  return img;
}

std::vector<ImuMeasurement> DatasetSequence::imu_slice(Timestamp a,
                                                       Timestamp b) const {
  return slice_measurements(imu, a, b);
}

void DatasetSequence::validate() const {
  for (size_t i = 1; i < frames.size(); ++i)
    if (frames[i].t <= frames[i - 1].t)
      throw std::runtime_error("DatasetSequence: frames not time sorted");
  for (size_t i = 1; i < imu.size(); ++i)
    if (imu[i].t <= imu[i - 1].t)
      throw std::runtime_error("DatasetSequence: imu not time sorted");
  if (frames.size() > 1 && imu.size() < frames.size())
    throw std::runtime_error("DatasetSequence: imu rate below image rate");
}

DatasetSequence load_euroc(const std::string& path) {
  fs::path root(path);
  if (fs::exists(root / "mav0")) root /= "mav0";
  if (!fs::exists(root / "cam0"))
    throw std::runtime_error("load_euroc: no cam0 under " + root.string());

  DatasetSequence seq;
  seq.name = fs::path(path).filename().string();

  // camera
  {
    const std::string yaml = read_text((root / "cam0" / "sensor.yaml").string());
    const auto res = yaml_list(yaml, "resolution");
    const auto intr = yaml_list(yaml, "intrinsics");
    if (res.size() == 2 && intr.size() == 4) {
      seq.cam.width = int(res[0]);
      seq.cam.height = int(res[1]);
      seq.cam.fx = intr[0];
      seq.cam.fy = intr[1];
      seq.cam.cx = intr[2];
      seq.cam.cy = intr[3];
    }
    const auto dist = yaml_list(yaml, "distortion_coefficients");
    if (dist.size() >= 4) {
      seq.distortion.k1 = dist[0];
      seq.distortion.k2 = dist[1];
      seq.distortion.p1 = dist[2];
      seq.distortion.p2 = dist[3];
    }
    const auto tbs = yaml_list(yaml, "data");
    if (tbs.size() == 16) {
      Mat33 r;
      r << tbs[0], tbs[1], tbs[2], tbs[4], tbs[5], tbs[6], tbs[8], tbs[9],
          tbs[10];
      seq.t_imu_cam = Se3(Quat(r), Vec3(tbs[3], tbs[7], tbs[11]));
    }
  }

  // imu noise model
  {
    const std::string yaml = read_text((root / "imu0" / "sensor.yaml").string());
    seq.noise.gyro_noise_density =
        yaml_scalar(yaml, "gyroscope_noise_density", seq.noise.gyro_noise_density);
    seq.noise.gyro_bias_walk =
        yaml_scalar(yaml, "gyroscope_random_walk", seq.noise.gyro_bias_walk);
    seq.noise.accel_noise_density = yaml_scalar(
        yaml, "accelerometer_noise_density", seq.noise.accel_noise_density);
    seq.noise.accel_bias_walk = yaml_scalar(yaml, "accelerometer_random_walk",
                                            seq.noise.accel_bias_walk);
    seq.noise.rate_hz = yaml_scalar(yaml, "rate_hz", seq.noise.rate_hz);
  }

  // images
  {
    const std::string file = (root / "cam0" / "data.csv").string();
    int row = 0;
    for (const auto& cells : read_csv(file)) {
      ++row;
      if (cells.size() < 2)
        throw std::runtime_error("load_euroc: malformed row " +
                                 std::to_string(row) + " in " + file);
      FrameRecord rec;
      rec.t = parse_timestamp(cells[0], file, row);
      rec.path = (root / "cam0" / "data" / cells[1]).string();
      seq.frames.push_back(rec);
    }
  }

  // imu
  {
    const std::string file = (root / "imu0" / "data.csv").string();
    int row = 0;
    for (const auto& cells : read_csv(file)) {
      ++row;
      if (cells.size() < 7)
        throw std::runtime_error("load_euroc: malformed row " +
                                 std::to_string(row) + " in " + file);
      ImuMeasurement m;
      m.t = parse_timestamp(cells[0], file, row);
      for (int k = 0; k < 3; ++k) m.gyro[k] = parse_double(cells[1 + k], file, row);
      for (int k = 0; k < 3; ++k)
        m.accel[k] = parse_double(cells[4 + k], file, row);
      seq.imu.push_back(m);
    }
  }

  // ground truth (optional for raw sequences)
  {
    const fs::path gt = root / "state_groundtruth_estimate0" / "data.csv";
    if (fs::exists(gt)) {
      const std::string file = gt.string();
      int row = 0;
      for (const auto& cells : read_csv(file)) {
        ++row;
        if (cells.size() < 8)
          throw std::runtime_error("load_euroc: malformed row " +
                                   std::to_string(row) + " in " + file);
        GroundTruthState g;
        g.t = parse_timestamp(cells[0], file, row);
        const Vec3 p(parse_double(cells[1], file, row),
                     parse_double(cells[2], file, row),
                     parse_double(cells[3], file, row));
        Quat q(parse_double(cells[4], file, row),
               parse_double(cells[5], file, row),
               parse_double(cells[6], file, row),
               parse_double(cells[7], file, row));
        g.t_w_imu = Se3(q, p);
        if (cells.size() >= 11) {
          for (int k = 0; k < 3; ++k)
            g.velocity[k] = parse_double(cells[8 + k], file, row);
        }
        if (cells.size() >= 17) {
          for (int k = 0; k < 3; ++k)
            g.bias.gyro[k] = parse_double(cells[11 + k], file, row);
          for (int k = 0; k < 3; ++k)
            g.bias.accel[k] = parse_double(cells[14 + k], file, row);
        }
        seq.ground_truth.push_back(g);
      }
    }
  }

  seq.validate();
  return seq;
}

void save_euroc(const DatasetSequence& seq, const std::string& path) {
  const fs::path root = fs::path(path) / "mav0";
  fs::create_directories(root / "cam0" / "data");
  fs::create_directories(root / "imu0");
  fs::create_directories(root / "state_groundtruth_estimate0");

  char buf[512];

  {
    std::ofstream yaml((root / "cam0" / "sensor.yaml").string());
    yaml << "sensor_type: camera\n";
    yaml << "rate_hz: 0\n";
    yaml << "resolution: [" << seq.cam.width << ", " << seq.cam.height << "]\n";
    std::snprintf(buf, sizeof buf,
                  "intrinsics: [%.17g, %.17g, %.17g, %.17g]\n", seq.cam.fx,
                  seq.cam.fy, seq.cam.cx, seq.cam.cy);
    yaml << buf;
    // frames are written through load_frame, i.e. already rectified
    yaml << "distortion_coefficients: [0, 0, 0, 0]\n";
    const Mat44 m = seq.t_imu_cam.matrix();
    yaml << "T_BS:\n  rows: 4\n  cols: 4\n  data: [";
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g%s", m(r, c),
                      (r == 3 && c == 3) ? "]\n" : ", ");
        yaml << buf;
      }
  }
  {
    std::ofstream yaml((root / "imu0" / "sensor.yaml").string());
    yaml << "sensor_type: imu\n";
    std::snprintf(buf, sizeof buf, "rate_hz: %.17g\n", seq.noise.rate_hz);
    yaml << buf;
    std::snprintf(buf, sizeof buf, "gyroscope_noise_density: %.17g\n",
                  seq.noise.gyro_noise_density);
    yaml << buf;
    std::snprintf(buf, sizeof buf, "gyroscope_random_walk: %.17g\n",
                  seq.noise.gyro_bias_walk);
    yaml << buf;
    std::snprintf(buf, sizeof buf, "accelerometer_noise_density: %.17g\n",
                  seq.noise.accel_noise_density);
    yaml << buf;
    std::snprintf(buf, sizeof buf, "accelerometer_random_walk: %.17g\n",
                  seq.noise.accel_bias_walk);
    yaml << buf;
  }

  {
    std::ofstream csv((root / "cam0" / "data.csv").string());
    csv << "#timestamp [ns],filename\n";
    for (size_t i = 0; i < seq.frames.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%" PRId64, seq.frames[i].t);
      const std::string name = std::string(buf) + ".pgm";
      csv << buf << "," << name << "\n";
      const Image img = seq.load_frame(i);
      save_pgm(img, (root / "cam0" / "data" / name).string());
    }
  }

  {
    std::ofstream csv((root / "imu0" / "data.csv").string());
    csv << "#timestamp [ns],w_RS_S_x,w_RS_S_y,w_RS_S_z,a_RS_S_x,a_RS_S_y,"
           "a_RS_S_z\n";
    for (const auto& m : seq.imu) {
      std::snprintf(buf, sizeof buf,
                    "%" PRId64 ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.t,
                    m.gyro.x(), m.gyro.y(), m.gyro.z(), m.accel.x(),
                    m.accel.y(), m.accel.z());
      csv << buf;
    }
  }

  {
    std::ofstream csv(
        (root / "state_groundtruth_estimate0" / "data.csv").string());
    csv << "#timestamp,p_x,p_y,p_z,q_w,q_x,q_y,q_z,v_x,v_y,v_z,b_w_x,b_w_y,"
           "b_w_z,b_a_x,b_a_y,b_a_z\n";
    for (const auto& g : seq.ground_truth) {
      const Vec3& p = g.t_w_imu.translation();
      const Quat& q = g.t_w_imu.rotation();
      std::snprintf(buf, sizeof buf,
                    "%" PRId64
                    ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                    "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                    g.t, p.x(), p.y(), p.z(), q.w(), q.x(), q.y(), q.z(),
                    g.velocity.x(), g.velocity.y(), g.velocity.z(),
                    g.bias.gyro.x(), g.bias.gyro.y(), g.bias.gyro.z(),
                    g.bias.accel.x(), g.bias.accel.y(), g.bias.accel.z());
      csv << buf;
    }
  }
}

}  // namespace svio
