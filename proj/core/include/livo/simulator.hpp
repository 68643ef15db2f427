#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "livo/dataset.hpp"
#include "livo/image.hpp"
#include "livo/state.hpp"

namespace livo::sim {

enum class TextureKind { kConstant, kChecker, kNoise };

/// Procedural grayscale texture over plane coordinates (u, v) in meters.
/// Noise is a sum of octaves of bilinearly interpolated lattice values
/// drawn from a hash of (seed, octave, i, j).
struct Texture {
  TextureKind kind = TextureKind::kNoise;
  double cell = 0.4;  // checker square / coarsest noise lattice spacing, meters
  int octaves = 5;    // noise only; each octave halves the spacing
  double base = 128.0;
  double amplitude = 110.0;
  std::uint64_t seed = 0;

  double sample(double u, double v) const;
};

/// Rectangle {origin + a axis_u + b axis_v : 0 <= a <= extent_u, 0 <= b <= extent_v}.
struct Plane {
  Vec3 origin = Vec3::Zero();
  Vec3 axis_u = Vec3::UnitX();
  Vec3 axis_v = Vec3::UnitY();
  double extent_u = 1.0;
  double extent_v = 1.0;
  Texture texture;

  Vec3 normal() const { return axis_u.cross(axis_v); }
};

struct RayHit {
  double range = 0.0;
  std::size_t plane = 0;
  double u = 0.0;
  double v = 0.0;
};

struct World {
  std::string name;
  std::vector<Plane> planes;

  /// Throws std::invalid_argument for non-orthonormal axes or empty extents.
  void validate() const;
  /// Nearest hit along origin + r dir (dir unit) with r > min_range.
  std::optional<RayHit> raycast(const Vec3& origin, const Vec3& dir, double min_range = 1e-6) const;
};

/// Ground-truth kinematics at one instant. Acceleration is global, angular
/// rate is expressed in the body frame.
struct TrajectorySample {
  double t = 0.0;
  Mat3 rot = Mat3::Identity();
  Vec3 pos = Vec3::Zero();
  Vec3 vel = Vec3::Zero();
  Vec3 acc = Vec3::Zero();
  Vec3 omega = Vec3::Zero();

  RigidTransform pose() const { return {rot, pos}; }
};

/// Platform at rest until `start_time`, then a smoothstep speed ramp of
/// `ramp_time` to `speed`, along a circle (counter-clockwise around
/// `anchor`) or a straight line (from `anchor` along `direction`). Attitude is
/// ZYX Euler: yaw follows the path heading for circles (fixed for lines)
/// plus `yaw_offset`, with sinusoidal roll/pitch/yaw whose amplitudes ramp in
/// with the speed.
struct TrajectorySpec {
  enum class Path { kCircle, kLine };
  Path path = Path::kCircle;
  Vec3 anchor = Vec3::Zero();
  double radius = 3.0;
  double start_angle = 0.0;
  Vec3 direction = Vec3::UnitX();
  double speed = 1.0;
  double start_time = 1.0;
  double ramp_time = 2.0;
  double duration = 10.0;
  double yaw_offset = 0.0;
  double roll_amplitude = 0.0;
  double pitch_amplitude = 0.0;
  double yaw_amplitude = 0.0;
  double oscillation_hz = 0.2;

  void validate() const;
  /// Throws std::invalid_argument outside [0, duration].
  TrajectorySample evaluate(double t) const;
  /// Arc length travelled by time t.
  double distance(double t) const;
};

struct ImuNoiseModel {
  double sigma_gyro = 5e-4;   // rad/s/sqrt(Hz)
  double sigma_accel = 5e-3;  // m/s^2/sqrt(Hz)
  Vec3 bias_gyro = Vec3::Zero();
  Vec3 bias_accel = Vec3::Zero();
};

/// Samples at k / rate_hz for k = 0 .. floor(duration * rate_hz). Per-sample
/// noise std-dev is sigma * sqrt(rate_hz). `truth` (optional) receives the
/// trajectory at the same instants.
std::vector<ImuSample> simulateImu(const TrajectorySpec& spec, const ImuNoiseModel& noise, double rate_hz,
                                   const Vec3& gravity, std::mt19937_64& rng,
                                   std::vector<TrajectorySample>* truth = nullptr);

/// Raster sweep: `columns` azimuth steps over 360 degrees, each firing all
/// `rings` elevations at once. Column c of a scan ending at t_end is sampled
/// at t_end - period * (columns - 1 - c) / columns. Points are stored
/// ring-major.
struct LidarPattern {
  int rings = 32;
  int columns = 360;
  double min_elevation = -0.35;  // rad
  double max_elevation = 0.35;
  double period = 0.1;  // 0 gives an instantaneous scan
  double range_noise = 0.01;
  double min_range = 0.3;
  double max_range = 30.0;
};

LidarScan simulateLidar(const TrajectorySpec& spec, const World& world, double t_end, const LidarPattern& pattern,
                        const RigidTransform& T_IL, std::mt19937_64& rng);

/// Pinhole render at time t; background 0. Noise is added before 8-bit
/// quantization; rng may be null when noise_sigma is 0.
Image renderImage(const TrajectorySpec& spec, const World& world, double t, const CameraIntrinsics& intrinsics,
                  const RigidTransform& T_IC, double noise_sigma, std::mt19937_64* rng);

struct Scene {
  World world;
  TrajectorySpec trajectory;
  LidarPattern lidar;
  SensorConfig sensors;
};

/// Known scenes: box_room, single_wall, textureless_wall, occluder.
Scene makeScene(const std::string& name);
std::vector<std::string> sceneNames();

struct SimulationConfig {
  std::uint64_t seed = 7;
  double imu_rate = 200.0;
  double scan_rate = 10.0;
  double camera_rate = 10.0;
  ImuNoiseModel imu{5e-4, 5e-3, Vec3(1.0e-3, -1.5e-3, 2.0e-3), Vec3(0.02, -0.015, 0.01)};
  double image_noise = 1.0;  // intensity std-dev before quantization
  bool range_noise = true;
  NoiseConfig filter_noise{};  // written to calib.txt
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
};

/// IMU, scans ending at k / scan_rate, images at k / camera_rate (k >= 1)
/// and ground truth at the IMU instants. IMU, LiDAR and camera noise use
/// independent generators derived from the seed.
Dataset generateDataset(const Scene& scene, const SimulationConfig& cfg);

/// Camera-to-IMU rotation with the optical axis along body x.
Mat3 forwardCameraRotation();

}  // namespace livo::sim
