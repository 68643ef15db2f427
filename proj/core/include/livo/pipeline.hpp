#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "livo/esikf.hpp"
#include "livo/lidar_map.hpp"
#include "livo/measurement.hpp"
#include "livo/state.hpp"
#include "livo/visual_map.hpp"

namespace livo {

enum class Mode { kLio, kVio, kLivo };
/// "lio", "vio" or "livo"; throws std::invalid_argument otherwise.
Mode parseMode(const std::string& s);
const char* modeName(Mode m);

enum class UpdateKind { kLidar, kVisual };

struct TrajectoryRecord {
  double timestamp = 0.0;
  Mat3 rot_GI = Mat3::Identity();
  Vec3 pos_GI = Vec3::Zero();
  UpdateKind kind = UpdateKind::kLidar;
};

/// One row of the per-update diagnostics log.
struct UpdateDiagnostics {
  double timestamp = 0.0;
  UpdateKind kind = UpdateKind::kLidar;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;
  UpdateStatus status = UpdateStatus::kOk;
  std::size_t terms = 0;
  double final_cost = 0.0;
  std::vector<double> cost_history;
  // Visual bookkeeping.
  std::size_t submap_points = 0;
  std::size_t accepted_points = 0;
  std::size_t added_points = 0;
  std::size_t added_patches = 0;
  // Wall time per stage, milliseconds.
  double preprocess_ms = 0.0;  // undistortion or pyramid + submap + outlier rejection
  double update_ms = 0.0;
  double map_ms = 0.0;
};

struct PipelineConfig {
  Mode mode = Mode::kLivo;
  SensorConfig sensors;
  NoiseConfig noise;
  Covariance initial_covariance = defaultInitialCovariance();
  double reorder_tolerance = 0.005;
  double init_duration = 0.5;
  double init_gyro_threshold = 0.05;
  double gravity_magnitude = 9.81;
  double imu_history = 1.0;  // seconds of IMU kept for undistortion
  /// Every n-th undistorted point enters the LiDAR update; all points are
  /// inserted into the map.
  std::size_t scan_stride = 4;
  UndistortionConfig undistortion;
  KdTreeConfig kdtree;
  LidarUpdateConfig lidar;
  VisualMapConfig visual_map;
  VisualUpdateConfig visual;
};

struct PipelineCounters {
  std::size_t imu_propagations = 0;
  std::size_t lidar_updates = 0;
  std::size_t visual_updates = 0;
  std::size_t scans_mapped_only = 0;  // seeding or vio-mode map bookkeeping
  std::size_t dropped_out_of_order = 0;
  std::size_t dropped_before_init = 0;
  std::size_t dropped_by_mode = 0;
  std::size_t dropped_failed = 0;  // undistortion failures
  std::size_t degenerate_lidar_updates = 0;
};

/// Single-threaded estimator front end. Measurements pass through a
/// reordering buffer, then each LiDAR scan or image waits until an IMU
/// sample at or after its timestamp is available, so propagation lands
/// exactly on it.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg);

  /// Returns the records of all updates that became ready.
  std::vector<TrajectoryRecord> process(const Measurement& m);
  /// Drains the reordering buffer at end of stream. Measurements still
  /// waiting for IMU coverage are dropped.
  std::vector<TrajectoryRecord> flush();

  bool initialized() const { return initialized_; }
  /// Latest fused or propagated state. Throws NotReadyError before
  /// initialization.
  std::pair<State, Covariance> currentState() const;
  double stateTime() const { return state_time_; }

  const PipelineConfig& config() const { return cfg_; }
  const PipelineCounters& counters() const { return counters_; }
  const std::vector<UpdateDiagnostics>& diagnostics() const { return diagnostics_; }
  const IncrementalKdTree& lidarMap() const { return lidar_map_; }
  const VisualMap& visualMap() const { return visual_map_; }

 private:
  struct Buffered {
    Measurement m;
    double t;
    int rank;
    std::uint64_t seq;
  };

  void release(double up_to, std::vector<TrajectoryRecord>& out);
  void handleOrdered(const Measurement& m, std::vector<TrajectoryRecord>& out);
  void handleImu(const ImuSample& s, std::vector<TrajectoryRecord>& out);
  void tryInitialize();
  void propagateTo(double t, const ImuSample& u_end);
  void handleMeasurement(const Measurement& m, std::vector<TrajectoryRecord>& out);
  void handleScan(const LidarScan& scan, std::vector<TrajectoryRecord>& out);
  void handleImage(const CameraFrame& frame, std::vector<TrajectoryRecord>& out);
  std::vector<ImuSample> imuWindow() const;
  void emit(UpdateKind kind, std::vector<TrajectoryRecord>& out);

  PipelineConfig cfg_;
  PipelineCounters counters_;
  std::vector<UpdateDiagnostics> diagnostics_;

  std::vector<Buffered> reorder_;
  std::uint64_t seq_ = 0;
  double latest_seen_ = -1e300;
  double last_released_ = -1e300;

  bool initialized_ = false;
  std::vector<ImuSample> init_imu_;
  std::optional<LidarScan> init_scan_;

  State state_;
  Covariance cov_ = Covariance::Zero();
  double state_time_ = 0.0;
  ImuSample state_input_;  // IMU reading at state_time_
  std::optional<ImuSample> last_imu_;
  std::deque<ImuSample> imu_history_;
  std::deque<Measurement> pending_;

  IncrementalKdTree lidar_map_;
  VisualMap visual_map_;
  std::vector<LidarPoint> last_scan_;  // undistorted, LiDAR frame
  RigidTransform last_scan_pose_;      // T_GL used for last_scan_
  bool have_scan_ = false;
  std::uint64_t frame_id_ = 0;
};

}  // namespace livo
