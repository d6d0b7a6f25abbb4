#include "svio/io/traces.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "svio/optimize/j_rel.hpp"

namespace svio {

namespace {

void print_timestamp(char* buf, size_t n, Timestamp t) {
  std::snprintf(buf, n, "%" PRId64 ".%09" PRId64, t / 1000000000,
                t % 1000000000);
}

Timestamp parse_timestamp_seconds(const std::string& field) {
  const auto dot = field.find('.');
  const std::string sec = dot == std::string::npos ? field : field.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : field.substr(dot + 1);
  frac.resize(9, '0');
  return std::stoll(sec) * 1000000000 + std::stoll(frac);
}

}  // namespace

std::vector<std::pair<Timestamp, Vec3>> TrajectoryEstimate::metric_positions()
    const {
  std::vector<std::pair<Timestamp, Vec3>> out;
  out.reserve(rows.size());
  for (const PoseRow& r : rows) {
    const ImuState s = imu_state_from_dso(r.t_w_cam.inverse(), Vec3::Zero(),
                                          ImuBias{}, final_sg, t_imu_cam);
    out.emplace_back(r.t, s.pose.translation());
  }
  return out;
}

void write_tum_trajectory(const std::vector<TrajectoryEstimate::PoseRow>& rows,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_tum_trajectory: cannot open " + path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char ts[64], buf[512];
  for (const auto& r : rows) {
    print_timestamp(ts, sizeof ts, r.t);
    const Vec3& p = r.t_w_cam.translation();
    const Quat& q = r.t_w_cam.rotation();
    std::snprintf(buf, sizeof buf,
                  "%s %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", ts, p.x(),
                  p.y(), p.z(), q.x(), q.y(), q.z(), q.w());
    out << buf;
  }
}

std::vector<TrajectoryEstimate::PoseRow> read_tum_trajectory(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_tum_trajectory: cannot open " + path);
  std::vector<TrajectoryEstimate::PoseRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string ts;
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw std::runtime_error("read_tum_trajectory: malformed line in " +
                               path);
    TrajectoryEstimate::PoseRow r;
    r.t = parse_timestamp_seconds(ts);
    r.t_w_cam = Se3(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz));
    rows.push_back(r);
  }
  return rows;
}

void write_scale_trace(const std::vector<TrajectoryEstimate::ScaleRow>& rows,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_scale_trace: cannot open " + path);
  out << "# t,s_curr,s_middle,upper,lower,transition\n";
  char ts[64], buf[512];
  for (const auto& r : rows) {
    print_timestamp(ts, sizeof ts, r.t);
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%.17g,%.17g,%d\n", ts,
                  r.s_curr, r.s_middle, r.upper, r.lower, r.transition);
    out << buf;
  }
}

std::vector<TrajectoryEstimate::ScaleRow> read_scale_trace(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_scale_trace: cannot open " + path);
  std::vector<TrajectoryEstimate::ScaleRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream ls(line);
    std::string ts;
    TrajectoryEstimate::ScaleRow r;
    if (!(ls >> ts >> r.s_curr >> r.s_middle >> r.upper >> r.lower >>
          r.transition))
      throw std::runtime_error("read_scale_trace: malformed line in " + path);
    r.t = parse_timestamp_seconds(ts);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace svio
