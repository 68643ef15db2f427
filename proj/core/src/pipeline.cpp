#include "livo/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "livo/errors.hpp"

namespace livo {

Mode parseMode(const std::string& s) {
  if (s == "lio") return Mode::kLio;
  if (s == "vio") return Mode::kVio;
  if (s == "livo") return Mode::kLivo;
  throw std::invalid_argument("unknown mode '" + s + "' (expected lio, vio or livo)");
}

const char* modeName(Mode m) {
  switch (m) {
    case Mode::kLio:
      return "lio";
    case Mode::kVio:
      return "vio";
    case Mode::kLivo:
      return "livo";
  }
  return "?";
}

namespace {

using Clock = std::chrono::steady_clock;

double msSince(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg)
    : cfg_(std::move(cfg)), lidar_map_(cfg_.kdtree), visual_map_(cfg_.visual_map) {
  cfg_.noise.validate();
  if (cfg_.scan_stride == 0) throw std::invalid_argument("Pipeline: scan_stride must be >= 1");
  if (!(cfg_.init_duration > 0.0)) throw std::invalid_argument("Pipeline: init_duration must be positive");
}

std::pair<State, Covariance> Pipeline::currentState() const {
  if (!initialized_) throw NotReadyError("pipeline is not initialized");
  return {state_, cov_};
}

std::vector<TrajectoryRecord> Pipeline::process(const Measurement& m) {
  std::vector<TrajectoryRecord> out;
  const double t = timestampOf(m);
  if (!std::isfinite(t) || t < last_released_ || t < latest_seen_ - cfg_.reorder_tolerance) {
    ++counters_.dropped_out_of_order;
    return out;
  }
  Buffered b{m, t, kindRank(m), seq_++};
  const auto pos = std::upper_bound(reorder_.begin(), reorder_.end(), b, [](const Buffered& x, const Buffered& y) {
    if (x.t != y.t) return x.t < y.t;
    if (x.rank != y.rank) return x.rank < y.rank;
    return x.seq < y.seq;
  });
  reorder_.insert(pos, std::move(b));
  latest_seen_ = std::max(latest_seen_, t);
  release(latest_seen_ - cfg_.reorder_tolerance, out);
  return out;
}

std::vector<TrajectoryRecord> Pipeline::flush() {
  std::vector<TrajectoryRecord> out;
  release(std::numeric_limits<double>::infinity(), out);
  counters_.dropped_failed += pending_.size();
  pending_.clear();
  return out;
}

void Pipeline::release(double up_to, std::vector<TrajectoryRecord>& out) {
  std::size_t n = 0;
  while (n < reorder_.size() && reorder_[n].t <= up_to) ++n;
  if (n == 0) return;
  std::vector<Buffered> ready(std::make_move_iterator(reorder_.begin()),
                              std::make_move_iterator(reorder_.begin() + static_cast<std::ptrdiff_t>(n)));
  reorder_.erase(reorder_.begin(), reorder_.begin() + static_cast<std::ptrdiff_t>(n));
  for (const Buffered& b : ready) {
    last_released_ = b.t;
    handleOrdered(b.m, out);
  }
}

void Pipeline::handleOrdered(const Measurement& m, std::vector<TrajectoryRecord>& out) {
  if (const auto* imu = std::get_if<ImuSample>(&m)) {
    handleImu(*imu, out);
    return;
  }
  const double t = timestampOf(m);
  const bool is_scan = std::holds_alternative<LidarScan>(m);
  if (!initialized_) {
    if (is_scan) {
      if (init_scan_) ++counters_.dropped_before_init;
      init_scan_ = std::get<LidarScan>(m);
    } else {
      ++counters_.dropped_before_init;
    }
    return;
  }
  if (!is_scan && cfg_.mode == Mode::kLio) {
    ++counters_.dropped_by_mode;
    return;
  }
  if (t < state_time_) {
    ++counters_.dropped_out_of_order;
    return;
  }
  if (t == state_time_ && pending_.empty()) {
    handleMeasurement(m, out);
    return;
  }
  pending_.push_back(m);
}

void Pipeline::handleImu(const ImuSample& s, std::vector<TrajectoryRecord>& out) {
  if (!initialized_) {
    init_imu_.push_back(s);
    tryInitialize();
    return;
  }
  if (last_imu_ && !(s.timestamp > last_imu_->timestamp)) {
    ++counters_.dropped_out_of_order;
    return;
  }
  imu_history_.push_back(s);
  while (imu_history_.size() > 2 && imu_history_.front().timestamp < s.timestamp - cfg_.imu_history) {
    imu_history_.pop_front();
  }
  while (!pending_.empty() && timestampOf(pending_.front()) <= s.timestamp) {
    const double tk = timestampOf(pending_.front());
    const ImuSample uk = tk == s.timestamp ? s : interpolate(*last_imu_, s, tk);
    propagateTo(tk, uk);
    const Measurement m = std::move(pending_.front());
    pending_.pop_front();
    handleMeasurement(m, out);
  }
  propagateTo(s.timestamp, s);
  last_imu_ = s;
  ++counters_.imu_propagations;
}

void Pipeline::tryInitialize() {
  if (init_imu_.back().timestamp - init_imu_.front().timestamp < cfg_.init_duration - 1e-9) return;
  Vec3 mean_gyro = Vec3::Zero();
  Vec3 mean_acc = Vec3::Zero();
  for (const auto& s : init_imu_) {
    if (s.gyro.norm() >= cfg_.init_gyro_threshold) {
      throw InitializationError("platform is not stationary during initialization (|gyro| = " +
                                std::to_string(s.gyro.norm()) + " rad/s at t = " + std::to_string(s.timestamp) +
                                ")");
    }
    mean_gyro += s.gyro;
    mean_acc += s.accel;
  }
  mean_gyro /= static_cast<double>(init_imu_.size());
  mean_acc /= static_cast<double>(init_imu_.size());
  if (mean_acc.norm() < 1e-6) throw InitializationError("zero specific force during initialization");

  state_ = State{};
  state_.bias_gyro = mean_gyro;
  state_.gravity_G = -mean_acc.normalized() * cfg_.gravity_magnitude;
  cov_ = cfg_.initial_covariance;
  state_time_ = init_imu_.back().timestamp;
  state_input_ = init_imu_.back();
  last_imu_ = init_imu_.back();
  imu_history_.assign(init_imu_.begin(), init_imu_.end());
  init_imu_.clear();
  initialized_ = true;

  if (init_scan_) {
    LidarScan und = *init_scan_;
    try {
      und = undistortScan(*init_scan_, imuWindow(), state_, cfg_.sensors.T_IL, cfg_.undistortion);
    } catch (const UndistortionError&) {
      // Stationary platform: the raw scan is already undistorted.
    }
    last_scan_pose_ = state_.pose() * cfg_.sensors.T_IL;
    last_scan_ = std::move(und.points);
    have_scan_ = true;
    if (cfg_.mode != Mode::kVio) {
      std::vector<Vec3> world;
      world.reserve(last_scan_.size());
      for (const auto& p : last_scan_) world.push_back(last_scan_pose_ * p.position);
      lidar_map_.insertPoints(world);
    }
    ++counters_.scans_mapped_only;
    init_scan_.reset();
  }
}

void Pipeline::propagateTo(double t, const ImuSample& u_end) {
  const double dt = t - state_time_;
  if (dt > 0.0) {
    ImuSample mid;
    mid.timestamp = state_time_;
    mid.gyro = 0.5 * (state_input_.gyro + u_end.gyro);
    mid.accel = 0.5 * (state_input_.accel + u_end.accel);
    const PropagationJacobians J = propagationJacobians(state_, mid, dt);
    cov_ = propagateCovariance(cov_, J.F_x, J.F_w, discreteNoise(cfg_.noise, dt));
    state_ = propagateState(state_, mid, dt);
    state_time_ = t;
  }
  state_input_ = u_end;
}

std::vector<ImuSample> Pipeline::imuWindow() const { return {imu_history_.begin(), imu_history_.end()}; }

void Pipeline::handleMeasurement(const Measurement& m, std::vector<TrajectoryRecord>& out) {
  if (const auto* scan = std::get_if<LidarScan>(&m)) {
    handleScan(*scan, out);
  } else if (const auto* frame = std::get_if<CameraFrame>(&m)) {
    handleImage(*frame, out);
  }
}

void Pipeline::emit(UpdateKind kind, std::vector<TrajectoryRecord>& out) {
  out.push_back({state_time_, state_.rot_GI, state_.pos_GI, kind});
}

void Pipeline::handleScan(const LidarScan& scan, std::vector<TrajectoryRecord>& out) {
  UpdateDiagnostics diag;
  diag.timestamp = scan.end_time;
  diag.kind = UpdateKind::kLidar;

  auto t0 = Clock::now();
  LidarScan und;
  try {
    und = undistortScan(scan, imuWindow(), state_, cfg_.sensors.T_IL, cfg_.undistortion);
  } catch (const UndistortionError&) {
    ++counters_.dropped_failed;
    return;
  }
  diag.preprocess_ms = msSince(t0);

  const auto storeScan = [&]() {
    last_scan_pose_ = state_.pose() * cfg_.sensors.T_IL;
    last_scan_ = std::move(und.points);
    have_scan_ = true;
  };

  if (cfg_.mode == Mode::kVio || lidar_map_.empty()) {
    storeScan();
    if (cfg_.mode != Mode::kVio) {
      std::vector<Vec3> world;
      for (const auto& p : last_scan_) world.push_back(last_scan_pose_ * p.position);
      lidar_map_.insertPoints(world);
    }
    ++counters_.scans_mapped_only;
    return;
  }

  t0 = Clock::now();
  std::vector<LidarPoint> sub;
  sub.reserve(und.points.size() / cfg_.scan_stride + 1);
  for (std::size_t i = 0; i < und.points.size(); i += cfg_.scan_stride) sub.push_back(und.points[i]);
  const UpdateResult res = lidarUpdate({state_, cov_}, sub, lidar_map_, cfg_.sensors.T_IL, cfg_.lidar);
  state_ = res.state;
  cov_ = res.cov;
  diag.update_ms = msSince(t0);

  t0 = Clock::now();
  storeScan();
  std::vector<Vec3> world;
  world.reserve(last_scan_.size());
  for (const auto& p : last_scan_) world.push_back(last_scan_pose_ * p.position);
  lidar_map_.insertPoints(world);
  diag.map_ms = msSince(t0);

  diag.iterations = res.iterations;
  diag.converged = res.converged;
  diag.degenerate = res.degenerate;
  diag.status = res.status;
  diag.terms = res.final_terms;
  diag.final_cost = res.final_cost;
  diag.cost_history = res.cost_history;
  diagnostics_.push_back(std::move(diag));
  ++counters_.lidar_updates;
  if (res.degenerate) ++counters_.degenerate_lidar_updates;
  emit(UpdateKind::kLidar, out);
}

void Pipeline::handleImage(const CameraFrame& frame, std::vector<TrajectoryRecord>& out) {
  UpdateDiagnostics diag;
  diag.timestamp = frame.timestamp;
  diag.kind = UpdateKind::kVisual;
  ++frame_id_;

  auto t0 = Clock::now();
  const SensorConfig& sensors = cfg_.sensors;
  const PinholeCamera camera(sensors.camera, cfg_.visual.measurement.min_depth);
  const ImagePyramid pyramid(frame.image, frame.timestamp);
  std::vector<Vec3> scan_world;
  if (have_scan_) {
    scan_world.reserve(last_scan_.size());
    for (const auto& p : last_scan_) scan_world.push_back(last_scan_pose_ * p.position);
  }
  const RigidTransform T_GC_pred = cameraPose(state_, sensors);
  const auto submap = visual_map_.extractSubmap(scan_world, T_GC_pred, camera);
  const auto accepted = visual_map_.rejectOutliers(submap, scan_world, T_GC_pred, camera);
  const auto correspondences =
      prepareCorrespondences(state_, sensors, visual_map_, accepted, cfg_.visual.measurement);
  diag.submap_points = submap.size();
  diag.accepted_points = accepted.size();
  diag.preprocess_ms = msSince(t0);

  t0 = Clock::now();
  const UpdateResult res = visualUpdate({state_, cov_}, pyramid, correspondences, sensors, cfg_.visual);
  state_ = res.state;
  cov_ = res.cov;
  diag.update_ms = msSince(t0);

  t0 = Clock::now();
  const RigidTransform T_GC = cameraPose(state_, sensors);
  const auto errors = photometricErrors(state_, sensors, pyramid, correspondences, cfg_.visual.measurement);
  std::vector<std::uint64_t> ids;
  std::vector<Vec2> occupied;
  const RigidTransform T_CG = T_GC.inverse();
  for (const auto& c : correspondences) {
    ids.push_back(c.point_id);
    const Vec3 p_C = T_CG * c.position;
    if (p_C.z() > camera.minDepth()) occupied.push_back(camera.projectUnchecked(p_C));
  }
  // Correspondences point into the map; they are not used past this line.
  diag.added_patches = visual_map_.updatePatches(pyramid, frame_id_, T_GC, camera, ids, errors);
  if (have_scan_) {
    diag.added_points =
        visual_map_.addMapPoints(pyramid, frame_id_, last_scan_, last_scan_pose_, T_GC, camera, occupied).size();
  }
  diag.map_ms = msSince(t0);

  diag.iterations = res.iterations;
  diag.converged = res.converged;
  diag.status = res.status;
  diag.terms = res.final_terms;
  diag.final_cost = res.final_cost;
  diag.cost_history = res.cost_history;
  diagnostics_.push_back(std::move(diag));
  ++counters_.visual_updates;
  emit(UpdateKind::kVisual, out);
}

}  // namespace livo
