#include "livo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Geometry>

namespace livo::sim {

namespace {

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double latticeValue(std::uint64_t seed, int octave, std::int64_t i, std::int64_t j) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ static_cast<std::uint64_t>(octave));
  h = mix(h ^ static_cast<std::uint64_t>(i));
  h = mix(h ^ static_cast<std::uint64_t>(j));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double bilinearLattice(std::uint64_t seed, int octave, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  const double ax = x - fx;
  const double ay = y - fy;
  const double v00 = latticeValue(seed, octave, i, j);
  const double v10 = latticeValue(seed, octave, i + 1, j);
  const double v01 = latticeValue(seed, octave, i, j + 1);
  const double v11 = latticeValue(seed, octave, i + 1, j + 1);
  return (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
}

// Smoothstep ramp value and time derivative.
struct Ramp {
  double value = 0.0;
  double rate = 0.0;
};

Ramp ramp(const TrajectorySpec& s, double t) {
  if (t <= s.start_time) return {};
  if (t >= s.start_time + s.ramp_time) return {1.0, 0.0};
  const double x = (t - s.start_time) / s.ramp_time;
  return {x * x * (3.0 - 2.0 * x), 6.0 * x * (1.0 - x) / s.ramp_time};
}

// a * rho(t) * sin(w t + phase) and its derivative.
std::pair<double, double> oscillation(double amplitude, double w, double phase, const Ramp& r, double t) {
  const double s = std::sin(w * t + phase);
  const double c = std::cos(w * t + phase);
  return {amplitude * r.value * s, amplitude * (r.rate * s + r.value * w * c)};
}

Mat3 rotZ(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }
Mat3 rotY(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rotX(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }

Plane rect(const Vec3& origin, const Vec3& u, const Vec3& v, double eu, double ev, Texture tex) {
  Plane p;
  p.origin = origin;
  p.axis_u = u;
  p.axis_v = v;
  p.extent_u = eu;
  p.extent_v = ev;
  p.texture = tex;
  return p;
}

Texture noiseTexture(std::uint64_t seed) {
  Texture t;
  t.kind = TextureKind::kNoise;
  t.seed = seed;
  return t;
}

Texture flatTexture() {
  Texture t;
  t.kind = TextureKind::kConstant;
  return t;
}

World boxRoom(const std::string& name, bool textured) {
  World w;
  w.name = name;
  const Vec3 X = Vec3::UnitX(), Y = Vec3::UnitY(), Z = Vec3::UnitZ();
  const auto tex = [&](std::uint64_t seed) { return textured ? noiseTexture(seed) : flatTexture(); };
  w.planes.push_back(rect({-5, -4, 0}, X, Y, 10, 8, tex(11)));  // floor
  w.planes.push_back(rect({-5, -4, 3}, X, Y, 10, 8, tex(12)));  // ceiling
  w.planes.push_back(rect({-5, -4, 0}, X, Z, 10, 3, tex(13)));
  w.planes.push_back(rect({-5, 4, 0}, X, Z, 10, 3, tex(14)));
  w.planes.push_back(rect({-5, -4, 0}, Y, Z, 8, 3, tex(15)));
  w.planes.push_back(rect({5, -4, 0}, Y, Z, 8, 3, tex(16)));
  return w;
}

TrajectorySpec roomOrbit() {
  TrajectorySpec t;
  t.path = TrajectorySpec::Path::kCircle;
  t.anchor = {0.0, 0.0, 1.4};
  t.radius = 3.2;
  t.start_angle = -0.5 * std::numbers::pi;
  t.speed = 1.0;
  t.start_time = 1.0;
  t.ramp_time = 2.0;
  t.duration = 22.0;  // 20 m of travel
  t.roll_amplitude = 0.05;
  t.pitch_amplitude = 0.05;
  t.yaw_amplitude = 0.05;
  t.oscillation_hz = 0.3;
  return t;
}

SensorConfig defaultSensors() {
  SensorConfig s;
  s.T_IL = {Mat3::Identity(), Vec3(0.0, 0.0, 0.1)};
  s.T_IC = {forwardCameraRotation(), Vec3(0.05, 0.0, 0.05)};
  return s;
}

}  // namespace

double Texture::sample(double u, double v) const {
  double n = 0.5;
  switch (kind) {
    case TextureKind::kConstant:
      return base;
    case TextureKind::kChecker: {
      const auto i = static_cast<std::int64_t>(std::floor(u / cell));
      const auto j = static_cast<std::int64_t>(std::floor(v / cell));
      n = ((i + j) & 1) ? 1.0 : 0.0;
      break;
    }
    case TextureKind::kNoise: {
      double sum = 0.0;
      double wsum = 0.0;
      double w = 1.0;
      double spacing = cell;
      for (int o = 0; o < octaves; ++o) {
        sum += w * bilinearLattice(seed, o, u / spacing, v / spacing);
        wsum += w;
        w *= 0.8;
        spacing *= 0.5;
      }
      // Stretch the octave average (which concentrates near 0.5) back
      // towards the full range.
      n = std::clamp(0.5 + 2.5 * (sum / wsum - 0.5), 0.0, 1.0);
      break;
    }
  }
  return std::clamp(base + amplitude * (2.0 * n - 1.0), 0.0, 255.0);
}

void World::validate() const {
  for (const Plane& p : planes) {
    if (!(p.extent_u > 0.0) || !(p.extent_v > 0.0)) throw std::invalid_argument("World: plane with empty extent");
    if (std::abs(p.axis_u.norm() - 1.0) > 1e-9 || std::abs(p.axis_v.norm() - 1.0) > 1e-9 ||
        std::abs(p.axis_u.dot(p.axis_v)) > 1e-9) {
      throw std::invalid_argument("World: plane axes must be orthonormal");
    }
  }
}

std::optional<RayHit> World::raycast(const Vec3& origin, const Vec3& dir, double min_range) const {
  std::optional<RayHit> best;
  for (std::size_t i = 0; i < planes.size(); ++i) {
    const Plane& pl = planes[i];
    const Vec3 n = pl.normal();
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double r = n.dot(pl.origin - origin) / denom;
    if (!(r > min_range) || (best && r >= best->range)) continue;
    const Vec3 rel = origin + r * dir - pl.origin;
    const double a = rel.dot(pl.axis_u);
    const double b = rel.dot(pl.axis_v);
    if (a < 0.0 || a > pl.extent_u || b < 0.0 || b > pl.extent_v) continue;
    best = RayHit{r, i, a, b};
  }
  return best;
}

void TrajectorySpec::validate() const {
  if (!(duration > 0.0) || !(speed >= 0.0) || !(start_time >= 0.0) || !(ramp_time > 0.0) ||
      !(oscillation_hz >= 0.0)) {
    throw std::invalid_argument("TrajectorySpec: invalid timing or speed");
  }
  if (path == Path::kCircle && !(radius > 0.0)) throw std::invalid_argument("TrajectorySpec: radius must be positive");
  if (path == Path::kLine && std::abs(direction.norm() - 1.0) > 1e-9) {
    throw std::invalid_argument("TrajectorySpec: line direction must be unit");
  }
}

double TrajectorySpec::distance(double t) const {
  if (t <= start_time) return 0.0;
  if (t >= start_time + ramp_time) return speed * (0.5 * ramp_time + (t - start_time - ramp_time));
  const double x = (t - start_time) / ramp_time;
  return speed * ramp_time * (x * x * x - 0.5 * x * x * x * x);
}

TrajectorySample TrajectorySpec::evaluate(double t) const {
  if (!(t >= 0.0 && t <= duration)) throw std::invalid_argument("TrajectorySpec::evaluate: time outside the spec");
  const Ramp r = ramp(*this, t);
  const double s = distance(t);
  const double s_dot = speed * r.value;
  const double s_ddot = speed * r.rate;

  TrajectorySample out;
  out.t = t;
  double yaw = yaw_offset;
  double yaw_rate = 0.0;
  if (path == Path::kCircle) {
    const double phi = start_angle + s / radius;
    const Vec3 radial(std::cos(phi), std::sin(phi), 0.0);
    const Vec3 tangent(-std::sin(phi), std::cos(phi), 0.0);
    out.pos = anchor + radius * radial;
    out.vel = s_dot * tangent;
    out.acc = s_ddot * tangent - (s_dot * s_dot / radius) * radial;
    yaw += phi + 0.5 * std::numbers::pi;
    yaw_rate += s_dot / radius;
  } else {
    out.pos = anchor + s * direction;
    out.vel = s_dot * direction;
    out.acc = s_ddot * direction;
  }

  const double w = 2.0 * std::numbers::pi * oscillation_hz;
  const auto [dyaw, dyaw_rate] = oscillation(yaw_amplitude, w, 0.0, r, t);
  const auto [pitch, pitch_rate] = oscillation(pitch_amplitude, 1.3 * w, 0.7, r, t);
  const auto [roll, roll_rate] = oscillation(roll_amplitude, 0.8 * w, 1.9, r, t);
  yaw += dyaw;
  yaw_rate += dyaw_rate;

  out.rot = rotZ(yaw) * rotY(pitch) * rotX(roll);
  const double sr = std::sin(roll), cr = std::cos(roll);
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  out.omega = Vec3(roll_rate - yaw_rate * sp, pitch_rate * cr + yaw_rate * cp * sr,
                   -pitch_rate * sr + yaw_rate * cp * cr);
  return out;
}

std::vector<ImuSample> simulateImu(const TrajectorySpec& spec, const ImuNoiseModel& noise, double rate_hz,
                                   const Vec3& gravity, std::mt19937_64& rng, std::vector<TrajectorySample>* truth) {
  spec.validate();
  if (!(rate_hz > 0.0)) throw std::invalid_argument("simulateImu: rate must be positive");
  std::normal_distribution<double> n01(0.0, 1.0);
  const double sg = noise.sigma_gyro * std::sqrt(rate_hz);
  const double sa = noise.sigma_accel * std::sqrt(rate_hz);
  const auto count = static_cast<long>(std::floor(spec.duration * rate_hz + 1e-9));
  std::vector<ImuSample> out;
  out.reserve(static_cast<std::size_t>(count) + 1);
  if (truth) truth->clear();
  for (long k = 0; k <= count; ++k) {
    const double t = static_cast<double>(k) / rate_hz;
    const TrajectorySample ts = spec.evaluate(std::min(t, spec.duration));
    ImuSample s;
    s.timestamp = t;
    s.gyro = ts.omega + noise.bias_gyro;
    s.accel = ts.rot.transpose() * (ts.acc - gravity) + noise.bias_accel;
    for (int i = 0; i < 3; ++i) s.gyro[i] += sg * n01(rng);
    for (int i = 0; i < 3; ++i) s.accel[i] += sa * n01(rng);
    out.push_back(s);
    if (truth) truth->push_back(ts);
  }
  return out;
}

LidarScan simulateLidar(const TrajectorySpec& spec, const World& world, double t_end, const LidarPattern& pattern,
                        const RigidTransform& T_IL, std::mt19937_64& rng) {
  if (pattern.rings < 1 || pattern.columns < 1) throw std::invalid_argument("simulateLidar: empty pattern");
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<std::vector<LidarPoint>> rings(static_cast<std::size_t>(pattern.rings));
  for (int c = 0; c < pattern.columns; ++c) {
    const double offset = pattern.period * static_cast<double>(pattern.columns - 1 - c) / pattern.columns;
    const double t = std::max(0.0, t_end - offset);
    const RigidTransform T_GL = spec.evaluate(t).pose() * T_IL;
    const double az = 2.0 * std::numbers::pi * c / pattern.columns;
    for (int r = 0; r < pattern.rings; ++r) {
      const double el =
          pattern.rings == 1
              ? pattern.min_elevation
              : pattern.min_elevation + (pattern.max_elevation - pattern.min_elevation) * r / (pattern.rings - 1);
      const Vec3 d_L(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const auto hit = world.raycast(T_GL.trans, T_GL.rot * d_L);
      if (!hit) continue;
      const double range = hit->range + pattern.range_noise * n01(rng);
      if (range < pattern.min_range || range > pattern.max_range) continue;
      LidarPoint p;
      p.position = range * d_L;
      p.time_offset = t_end - t;
      p.ring = r;
      rings[static_cast<std::size_t>(r)].push_back(p);
    }
  }
  LidarScan scan;
  scan.end_time = t_end;
  for (auto& ring : rings) scan.points.insert(scan.points.end(), ring.begin(), ring.end());
  return scan;
}

Image renderImage(const TrajectorySpec& spec, const World& world, double t, const CameraIntrinsics& k,
                  const RigidTransform& T_IC, double noise_sigma, std::mt19937_64* rng) {
  if (noise_sigma > 0.0 && rng == nullptr) throw std::invalid_argument("renderImage: noise requires an rng");
  const RigidTransform T_GC = spec.evaluate(t).pose() * T_IC;
  std::normal_distribution<double> n01(0.0, 1.0);
  Image img(k.width, k.height, 0.0f);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 d_C((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const auto hit = world.raycast(T_GC.trans, (T_GC.rot * d_C).normalized());
      double value = hit ? world.planes[hit->plane].texture.sample(hit->u, hit->v) : 0.0;
      if (noise_sigma > 0.0) value += noise_sigma * n01(*rng);
      img.at(x, y) = static_cast<float>(std::clamp(std::round(value), 0.0, 255.0));
    }
  }
  return img;
}

Mat3 forwardCameraRotation() {
  Mat3 R;
  R.col(0) = Vec3(0.0, -1.0, 0.0);
  R.col(1) = Vec3(0.0, 0.0, -1.0);
  R.col(2) = Vec3(1.0, 0.0, 0.0);
  return R;
}

std::vector<std::string> sceneNames() { return {"box_room", "single_wall", "textureless_wall", "occluder"}; }

Scene makeScene(const std::string& name) {
  const Vec3 X = Vec3::UnitX(), Y = Vec3::UnitY(), Z = Vec3::UnitZ();
  Scene sc;
  sc.sensors = defaultSensors();
  if (name == "box_room") {
    sc.world = boxRoom(name, true);
    sc.trajectory = roomOrbit();
  } else if (name == "textureless_wall") {
    sc.world = boxRoom(name, false);
    sc.trajectory = roomOrbit();
  } else if (name == "single_wall") {
    sc.world.name = name;
    sc.world.planes.push_back(rect({-60, 3, 0}, X, Z, 120, 6, noiseTexture(21)));
    sc.world.planes.push_back(rect({-60, -20, 0}, X, Y, 120, 23, noiseTexture(22)));
    TrajectorySpec& t = sc.trajectory;
    t.path = TrajectorySpec::Path::kLine;
    t.anchor = {-10.0, 0.0, 1.4};
    t.direction = X;
    t.duration = 22.0;
    t.yaw_offset = 0.5 * std::numbers::pi;
    t.roll_amplitude = 0.05;
    t.pitch_amplitude = 0.05;
    t.yaw_amplitude = 0.05;
    t.oscillation_hz = 0.3;
  } else if (name == "occluder") {
    sc.world.name = name;
    sc.world.planes.push_back(rect({-8, 6, 0}, X, Z, 16, 4, noiseTexture(31)));
    sc.world.planes.push_back(rect({-0.75, 3, 0.4}, X, Z, 1.5, 2.0, noiseTexture(32)));
    sc.world.planes.push_back(rect({-8, -4, 0}, X, Y, 16, 10, noiseTexture(33)));
    TrajectorySpec& t = sc.trajectory;
    t.path = TrajectorySpec::Path::kLine;
    t.anchor = {-3.0, 0.0, 1.4};
    t.direction = X;
    t.speed = 0.5;
    t.duration = 14.0;
    t.yaw_offset = 0.5 * std::numbers::pi;
    sc.lidar.rings = 64;
    sc.lidar.columns = 360;
    sc.lidar.min_elevation = -0.4;
    sc.lidar.max_elevation = 0.4;
  } else {
    throw std::invalid_argument("unknown scene '" + name + "'");
  }
  sc.world.validate();
  sc.trajectory.validate();
  return sc;
}

Dataset generateDataset(const Scene& scene, const SimulationConfig& cfg) {
  if (!(cfg.scan_rate > 0.0) || !(cfg.camera_rate > 0.0)) throw std::invalid_argument("generateDataset: bad rates");
  Dataset d;
  d.calib.scene = scene.world.name;
  d.calib.sensors = scene.sensors;
  d.calib.noise = cfg.filter_noise;
  d.calib.imu_rate = cfg.imu_rate;
  d.calib.scan_rate = cfg.scan_rate;
  d.calib.camera_rate = cfg.camera_rate;

  std::mt19937_64 rng_imu(mix(cfg.seed ^ 0x1));
  std::mt19937_64 rng_lidar(mix(cfg.seed ^ 0x2));
  std::mt19937_64 rng_camera(mix(cfg.seed ^ 0x3));

  std::vector<TrajectorySample> truth;
  d.imu = simulateImu(scene.trajectory, cfg.imu, cfg.imu_rate, cfg.gravity, rng_imu, &truth);
  d.groundtruth.reserve(truth.size());
  for (const auto& ts : truth) d.groundtruth.push_back({ts.t, ts.rot, ts.pos});

  LidarPattern pattern = scene.lidar;
  if (!cfg.range_noise) pattern.range_noise = 0.0;
  const double duration = scene.trajectory.duration;
  for (long k = 1;; ++k) {
    const double t = static_cast<double>(k) / cfg.scan_rate;
    if (t > duration + 1e-9) break;
    d.scans.push_back(simulateLidar(scene.trajectory, scene.world, t, pattern, scene.sensors.T_IL, rng_lidar));
  }
  for (long k = 1;; ++k) {
    const double t = static_cast<double>(k) / cfg.camera_rate;
    if (t > duration + 1e-9) break;
    d.images.push_back({t, renderImage(scene.trajectory, scene.world, t, scene.sensors.camera, scene.sensors.T_IC,
                                       cfg.image_noise, &rng_camera)});
  }
  return d;
}

}  // namespace livo::sim
