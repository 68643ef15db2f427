#include <algorithm>
#include <cmath>
#include <sstream>

#include "livo/errors.hpp"
#include "livo/state.hpp"

namespace livo {

double LidarScan::duration() const {
  double d = 0.0;
  for (const auto& p : points) d = std::max(d, p.time_offset);
  return d;
}

namespace {

// Kinematic snapshot at a knot plus the constant input of the following
// interval.
struct Knot {
  double t = 0.0;
  Mat3 rot;
  Vec3 pos;
  Vec3 vel;
  Vec3 omega;  // bias-corrected body rate on [t, t_next]
  Vec3 acc_G;  // global acceleration on [t, t_next]
};

ImuSample sampleAt(std::span<const ImuSample> imu, double t) {
  if (t <= imu.front().timestamp) return {t, imu.front().gyro, imu.front().accel};
  if (t >= imu.back().timestamp) return {t, imu.back().gyro, imu.back().accel};
  const auto it = std::lower_bound(imu.begin(), imu.end(), t,
                                   [](const ImuSample& s, double v) { return s.timestamp < v; });
  if (it->timestamp == t) return *it;
  return interpolate(*(it - 1), *it, t);
}

}  // namespace

LidarScan undistortScan(const LidarScan& scan, std::span<const ImuSample> imu, const State& state_at_end,
                        const RigidTransform& T_IL, const UndistortionConfig& cfg) {
  if (scan.points.empty()) return scan;
  if (imu.empty()) throw UndistortionError("undistortScan: empty IMU buffer");

  const double t_end = scan.end_time;
  const double t_start = t_end - scan.duration();

  const auto fail = [](double gap, double at) {
    std::ostringstream os;
    os << "undistortScan: IMU gap of " << gap << " s near t=" << at;
    throw UndistortionError(os.str());
  };
  if (imu.front().timestamp - t_start > cfg.max_imu_gap) fail(imu.front().timestamp - t_start, t_start);
  if (t_end - imu.back().timestamp > cfg.max_imu_gap) fail(t_end - imu.back().timestamp, t_end);

  std::vector<double> times{t_start};
  for (const auto& s : imu) {
    if (s.timestamp > t_start && s.timestamp < t_end) times.push_back(s.timestamp);
  }
  if (t_end > t_start) times.push_back(t_end);
  for (std::size_t i = 1; i < times.size(); ++i) {
    if (times[i] - times[i - 1] > cfg.max_imu_gap) fail(times[i] - times[i - 1], times[i - 1]);
  }

  // Backward integration from the scan end, inverting the forward model
  // exactly: R' = R Exp(w dt), v' = v + a dt, p' = p + v dt + a dt^2 / 2.
  std::vector<Knot> knots(times.size());
  knots.back().t = t_end;
  knots.back().rot = state_at_end.rot_GI;
  knots.back().pos = state_at_end.pos_GI;
  knots.back().vel = state_at_end.vel_G;
  knots.back().omega.setZero();
  knots.back().acc_G.setZero();
  ImuSample next = sampleAt(imu, t_end);
  for (std::size_t i = times.size() - 1; i-- > 0;) {
    const ImuSample cur = sampleAt(imu, times[i]);
    const double dt = times[i + 1] - times[i];
    Knot& k = knots[i];
    const Knot& kn = knots[i + 1];
    k.t = times[i];
    k.omega = 0.5 * (cur.gyro + next.gyro) - state_at_end.bias_gyro;
    k.rot = kn.rot * so3::exp(-k.omega * dt);
    k.acc_G = k.rot * (0.5 * (cur.accel + next.accel) - state_at_end.bias_accel) + state_at_end.gravity_G;
    k.vel = kn.vel - k.acc_G * dt;
    k.pos = kn.pos - k.vel * dt - 0.5 * k.acc_G * dt * dt;
    next = cur;
  }

  const RigidTransform T_end_inv = (RigidTransform{state_at_end.rot_GI, state_at_end.pos_GI} * T_IL).inverse();
  LidarScan out;
  out.end_time = scan.end_time;
  out.points.reserve(scan.points.size());
  for (const auto& pt : scan.points) {
    const double t = t_end - pt.time_offset;
    LidarPoint q = pt;
    q.time_offset = 0.0;
    if (pt.time_offset > 0.0) {
      auto it = std::upper_bound(times.begin(), times.end(), t);
      const std::size_t i = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
      const Knot& k = knots[std::min(i, knots.size() - 1)];
      const double tau = t - k.t;
      const RigidTransform T_GI{k.rot * so3::exp(k.omega * tau), k.pos + k.vel * tau + 0.5 * k.acc_G * tau * tau};
      q.position = T_end_inv * (T_GI * (T_IL * pt.position));
    }
    out.points.push_back(q);
  }
  return out;
}

}  // namespace livo
