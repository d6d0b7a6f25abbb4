#include "svio/io/simulator.hpp"

#include <random>
#include <stdexcept>

namespace svio {

namespace {

// value and first two derivatives of a scalar signal
struct D2 {
  double v = 0, d1 = 0, d2 = 0;
};

D2 product(const D2& a, const D2& b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1,
          a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2};
}

D2 sine(double amp, double freq, double phase, double t) {
  const double s = std::sin(freq * t + phase);
  const double c = std::cos(freq * t + phase);
  return {amp * s, amp * freq * c, -amp * freq * freq * s};
}

D2 cosine_wave(double amp, double freq, double t) {  // amp*(1-cos(freq t))
  const double s = std::sin(freq * t);
  const double c = std::cos(freq * t);
  return {amp * (1.0 - c), amp * freq * s, amp * freq * freq * c};
}

// C2 envelope: 0 before t0, quintic smoothstep over [t0, t0+ramp], then 1.
D2 envelope(double t, double t0, double ramp) {
  if (t <= t0) return {0, 0, 0};
  if (t >= t0 + ramp) return {1, 0, 0};
  const double x = (t - t0) / ramp;
  const double v = x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
  const double d1 = 30.0 * x * x * (1.0 - 2.0 * x + x * x) / ramp;
  const double d2 = (60.0 * x - 180.0 * x * x + 120.0 * x * x * x) / (ramp * ramp);
  return {v, d1, d2};
}

struct PlaneDef {
  Vec3 point, normal, e1, e2;
};

struct Wave {
  double ku, kv, amp, phase;
};

struct SceneModel {
  std::vector<PlaneDef> planes;
  std::vector<std::vector<Wave>> textures;  // per plane
  double base = 128.0;

  double shade(int plane, double u, double v) const {
    double val = base;
    for (const Wave& w : textures[plane])
      val += w.amp * std::sin(w.ku * u + w.kv * v + w.phase);
    return std::clamp(val, 2.0, 253.0);
  }
};

SceneModel make_scene(const SyntheticSpec& spec) {
  SceneModel scene;
  const double d = spec.scene_distance;
  const double w = 0.5 * d + spec.radius + 0.3;
  const double h = 0.45 * d + spec.z_amp + 0.3;

  scene.planes = {
      {{0, d, 0}, {0, -1, 0}, Vec3::UnitX(), Vec3::UnitZ()},   // front
      {{-w, 0, 0}, {1, 0, 0}, Vec3::UnitY(), Vec3::UnitZ()},   // left
      {{w, 0, 0}, {-1, 0, 0}, Vec3::UnitY(), Vec3::UnitZ()},   // right
      {{0, 0, -h}, {0, 0, 1}, Vec3::UnitX(), Vec3::UnitY()},   // floor
      {{0, 0, h}, {0, 0, -1}, Vec3::UnitX(), Vec3::UnitY()},   // ceiling
  };

  std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull + 12345);
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * M_PI);
  const double lambda0 = 0.5 * d;
  const double amp0 = 38.0;
  for (size_t p = 0; p < scene.planes.size(); ++p) {
    std::vector<Wave> waves;
    // one large-scale brightness component
    {
      const double k = 2.0 * M_PI / (2.0 * d);
      waves.push_back({k, 0.3 * k, 18.0, uphase(rng)});
    }
    double lambda = lambda0, amp = amp0;
    for (int o = 0; o < spec.texture_octaves; ++o) {
      for (int rep = 0; rep < 2; ++rep) {
        const double dir = uphase(rng);
        const double k = 2.0 * M_PI / lambda;
        waves.push_back(
            {k * std::cos(dir), k * std::sin(dir), amp, uphase(rng)});
      }
      lambda *= 0.5;
      amp *= 0.62;
    }
    scene.textures.push_back(std::move(waves));
  }
  return scene;
}

}  // namespace

SyntheticTrajectory::SyntheticTrajectory(const SyntheticSpec& spec)
    : spec_(spec) {
  // camera optical axis along world +y, image y axis pointing down
  r_base_ << 1, 0, 0, 0, 0, 1, 0, -1, 0;
}

TrajectorySample SyntheticTrajectory::sample(double t) const {
  const double t0 = spec_.lead_in;
  const D2 env = envelope(t, t0, spec_.ramp);
  const double tau = t - t0;

  D2 px, py, pz;  // excitation in world coordinates
  D2 ax{0, 0, 0}, ay{0, 0, 0}, az{0, 0, 0};
  if (spec_.trajectory == "stationary") {
    // all zero
  } else if (spec_.trajectory == "const_velocity") {
    px = {spec_.line_velocity * tau, spec_.line_velocity, 0.0};
  } else if (spec_.trajectory == "circle_sinusoid") {
    px = sine(spec_.radius, spec_.angular_rate, 0.0, tau);
    py = cosine_wave(spec_.radius, spec_.angular_rate, tau);
    pz = sine(spec_.z_amp, spec_.z_freq, 0.0, tau);
    ax = sine(spec_.rot_amp, spec_.rot_freq[0], 0.4, tau);
    ay = sine(spec_.rot_amp, spec_.rot_freq[1], 1.1, tau);
    az = sine(0.6 * spec_.rot_amp, spec_.rot_freq[2], 2.3, tau);
  } else {
    throw std::invalid_argument("SyntheticTrajectory: unknown trajectory " +
                                spec_.trajectory);
  }

  const D2 x = product(env, px), y = product(env, py), z = product(env, pz);
  const D2 ea = product(env, ax), eb = product(env, ay), ec = product(env, az);

  TrajectorySample s;
  const Vec3 pos(x.v, y.v, z.v);
  s.velocity = Vec3(x.d1, y.d1, z.d1);
  s.accel_world = Vec3(x.d2, y.d2, z.d2);

  const double a = ea.v, b = eb.v, c = ec.v;
  const Mat33 rz = Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
  const Mat33 ry = Eigen::AngleAxisd(b, Vec3::UnitY()).toRotationMatrix();
  const Mat33 rx = Eigen::AngleAxisd(c, Vec3::UnitX()).toRotationMatrix();
  const Mat33 r_wb = r_base_ * rz * ry * rx;
  s.t_w_imu = Se3(Quat(r_wb), pos);

  // body rates from z-y-x euler angle rates
  const double da = ea.d1, db = eb.d1, dc = ec.d1;
  s.gyro_body = Vec3(dc - da * std::sin(b),
                     da * std::cos(b) * std::sin(c) + db * std::cos(c),
                     da * std::cos(b) * std::cos(c) - db * std::sin(c));
  return s;
}

SyntheticSpec spec_from_config(const Config& cfg) {
  SyntheticSpec s;
  s.duration = cfg.get_double("sim_duration", s.duration);
  s.cam_rate = cfg.get_double("sim_cam_rate", s.cam_rate);
  s.imu_rate = cfg.get_double("sim_imu_rate", s.imu_rate);
  s.width = cfg.get_int("sim_width", s.width);
  s.height = cfg.get_int("sim_height", s.height);
  s.fx = cfg.get_double("sim_fx", s.fx);
  s.fy = cfg.get_double("sim_fy", s.fy);
  s.trajectory = cfg.get_string("sim_trajectory", s.trajectory);
  s.lead_in = cfg.get_double("sim_lead_in", s.lead_in);
  s.ramp = cfg.get_double("sim_ramp", s.ramp);
  s.radius = cfg.get_double("sim_radius", s.radius);
  s.angular_rate = cfg.get_double("sim_angular_rate", s.angular_rate);
  s.z_amp = cfg.get_double("sim_z_amp", s.z_amp);
  s.z_freq = cfg.get_double("sim_z_freq", s.z_freq);
  s.rot_amp = cfg.get_double("sim_rot_amp", s.rot_amp);
  s.line_velocity = cfg.get_double("sim_line_velocity", s.line_velocity);
  s.scene_distance = cfg.get_double("sim_scene_distance", s.scene_distance);
  s.texture_octaves = cfg.get_int("sim_texture_octaves", s.texture_octaves);
  s.seed = std::uint64_t(cfg.get_int("seed", int(s.seed)));
  s.gyro_noise = cfg.get_double("sim_gyro_noise", s.gyro_noise);
  s.accel_noise = cfg.get_double("sim_accel_noise", s.accel_noise);
  s.image_noise = cfg.get_double("sim_image_noise", s.image_noise);
  s.gyro_bias_true = Vec3::Constant(cfg.get_double("sim_gyro_bias", 0.0));
  s.accel_bias_true = Vec3::Constant(cfg.get_double("sim_accel_bias", 0.0));
  return s;
}

Image render_view(const SyntheticSpec& spec, const Se3& t_w_cam) {
  const SceneModel scene = make_scene(spec);

  CameraModel cam;
  cam.fx = spec.fx;
  cam.fy = spec.fy;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.cx = 0.5 * (spec.width - 1);
  cam.cy = 0.5 * (spec.height - 1);

  const Mat33 r_wc = t_w_cam.rotation_matrix();
  const Vec3 origin = t_w_cam.translation();

  Image img(spec.width, spec.height);
  int misses = 0;
  for (int v = 0; v < spec.height; ++v) {
    for (int u = 0; u < spec.width; ++u) {
      const Vec3 dir = r_wc * cam.unproject(Vec2(u, v)).normalized();
      double best_s = 1e30;
      int best_plane = -1;
      for (size_t p = 0; p < scene.planes.size(); ++p) {
        const PlaneDef& pl = scene.planes[p];
        const double denom = dir.dot(pl.normal);
        if (denom >= -1e-9) continue;  // plane faces away
        const double s = (pl.point - origin).dot(pl.normal) / denom;
        if (s > 0.05 && s < best_s) {
          best_s = s;
          best_plane = int(p);
        }
      }
      if (best_plane < 0) {
        ++misses;
        img.at(u, v) = 0.0f;
        continue;
      }
      const PlaneDef& pl = scene.planes[best_plane];
      const Vec3 hit = origin + best_s * dir - pl.point;
      img.at(u, v) =
          float(scene.shade(best_plane, hit.dot(pl.e1), hit.dot(pl.e2)));
    }
  }
  if (misses > spec.width * spec.height / 200)
    throw std::runtime_error("simulate: scene not visible from trajectory");
  return img;
}

double true_inverse_depth(const SyntheticSpec& spec, const Se3& t_w_cam,
                          const Vec2& pixel) {
  const SceneModel scene = make_scene(spec);
  CameraModel cam;
  cam.fx = spec.fx;
  cam.fy = spec.fy;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.cx = 0.5 * (spec.width - 1);
  cam.cy = 0.5 * (spec.height - 1);

  const Vec3 dir_cam = cam.unproject(pixel);
  const Vec3 dir = t_w_cam.rotation_matrix() * dir_cam;
  const Vec3 origin = t_w_cam.translation();
  double best_s = 1e30;
  for (const PlaneDef& pl : scene.planes) {
    const double denom = dir.dot(pl.normal);
    if (denom >= -1e-9) continue;
    const double s = (pl.point - origin).dot(pl.normal) / denom;
    if (s > 0.05 && s < best_s) best_s = s;
  }
  if (best_s > 1e29) return 0.0;
  // s parameterizes origin + s * dir with dir_cam z = 1, i.e. z_cam = s
  return 1.0 / best_s;
}

DatasetSequence simulate(const SyntheticSpec& spec) {
  DatasetSequence seq;
  seq.name = "synthetic_" + spec.trajectory;
  CameraModel cam;
  cam.fx = spec.fx;
  cam.fy = spec.fy;
  cam.width = spec.width;
  cam.height = spec.height;
  cam.cx = 0.5 * (spec.width - 1);
  cam.cy = 0.5 * (spec.height - 1);
  cam.validate();
  seq.cam = cam;
  seq.t_imu_cam = spec.t_imu_cam;
  seq.noise = spec.estimator_noise();

  const SyntheticTrajectory traj(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  // IMU stream
  const double g_sigma = spec.gyro_noise * std::sqrt(spec.imu_rate);
  const double a_sigma = spec.accel_noise * std::sqrt(spec.imu_rate);
  const Timestamp imu_step = Timestamp(std::llround(1e9 / spec.imu_rate));
  const Timestamp end = from_seconds(spec.duration);
  for (Timestamp t = 0; t <= end; t += imu_step) {
    const TrajectorySample s = traj.sample(to_seconds(t));
    ImuMeasurement m;
    m.t = t;
    const Mat33 r_bw = s.t_w_imu.rotation_matrix().transpose();
    m.gyro = s.gyro_body + spec.gyro_bias_true;
    m.accel = r_bw * (s.accel_world - gravity_world()) + spec.accel_bias_true;
    if (g_sigma > 0)
      m.gyro += Vec3(gauss(rng), gauss(rng), gauss(rng)) * g_sigma;
    if (a_sigma > 0)
      m.accel += Vec3(gauss(rng), gauss(rng), gauss(rng)) * a_sigma;
    seq.imu.push_back(m);
  }

  // frames + ground truth at camera rate
  const Timestamp cam_step = Timestamp(std::llround(1e9 / spec.cam_rate));
  for (Timestamp t = 0; t <= end; t += cam_step) {
    const TrajectorySample s = traj.sample(to_seconds(t));
    const Se3 t_w_cam = s.t_w_imu * spec.t_imu_cam;
    auto img = std::make_shared<Image>(render_view(spec, t_w_cam));
    if (spec.image_noise > 0) {
      for (float& px : img->data())
        px = std::clamp(px + float(gauss(rng) * spec.image_noise), 0.0f,
                        255.0f);
    }
    FrameRecord rec;
    rec.t = t;
    rec.inline_image = std::move(img);
    seq.frames.push_back(rec);

    GroundTruthState gt;
    gt.t = t;
    gt.t_w_imu = s.t_w_imu;
    gt.velocity = s.velocity;
    gt.bias = ImuBias{spec.gyro_bias_true, spec.accel_bias_true};
    seq.ground_truth.push_back(gt);
  }

  seq.validate();
  return seq;
}

}  // namespace svio
