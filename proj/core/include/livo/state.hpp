#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "livo/manifold.hpp"
#include "livo/rigid_transform.hpp"

namespace livo {

inline constexpr int kStateDim = 18;
inline constexpr int kNoiseDim = 12;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using Covariance = Eigen::Matrix<double, kStateDim, kStateDim>;
using NoiseVector = Eigen::Matrix<double, kNoiseDim, 1>;
using NoiseCovariance = Eigen::Matrix<double, kNoiseDim, kNoiseDim>;
using ProcessJacobian = Eigen::Matrix<double, kStateDim, kNoiseDim>;

/// Offsets of each block inside the 18-dim error state.
namespace idx {
inline constexpr int kRot = 0;
inline constexpr int kPos = 3;
inline constexpr int kVel = 6;
inline constexpr int kBiasGyro = 9;
inline constexpr int kBiasAccel = 12;
inline constexpr int kGravity = 15;
}  // namespace idx

/// Offsets inside the 12-dim process noise [n_g, n_a, n_bg, n_ba].
namespace noise_idx {
inline constexpr int kGyro = 0;
inline constexpr int kAccel = 3;
inline constexpr int kBiasGyro = 6;
inline constexpr int kBiasAccel = 9;
}  // namespace noise_idx

/// Navigation state on SO(3) x R^15. Frames: G global, I IMU body.
struct State {
  Mat3 rot_GI = Mat3::Identity();
  Vec3 pos_GI = Vec3::Zero();
  Vec3 vel_G = Vec3::Zero();
  Vec3 bias_gyro = Vec3::Zero();
  Vec3 bias_accel = Vec3::Zero();
  Vec3 gravity_G = Vec3(0.0, 0.0, -9.81);

  RigidTransform pose() const { return {rot_GI, pos_GI}; }
};

/// x [+] dx with the rotation perturbed on the right: R Exp(dx_rot).
State boxplus(const State& x, const StateVector& dx);
/// Inverse of boxplus: (x1 [-] x2) such that x2 [+] (x1 [-] x2) = x1.
StateVector boxminus(const State& x1, const State& x2);

struct ImuSample {
  double timestamp = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2, specific force
};

/// Linear interpolation of two IMU samples at time t.
ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t);

/// Continuous-time noise densities. Discrete covariances use sigma^2 / dt.
struct NoiseConfig {
  double sigma_gyro = 1e-3;
  double sigma_accel = 1e-2;
  double sigma_bias_gyro_walk = 1e-5;
  double sigma_bias_accel_walk = 1e-4;

  void validate() const;
};

struct CameraIntrinsics {
  double fx = 200.0;
  double fy = 200.0;
  double cx = 159.5;
  double cy = 119.5;
  int width = 320;
  int height = 240;
};

struct SensorConfig {
  RigidTransform T_IL;  // LiDAR frame in IMU frame
  RigidTransform T_IC;  // camera frame in IMU frame
  CameraIntrinsics camera;
};

/// Discrete process noise covariance Q for a step of length dt.
NoiseCovariance discreteNoise(const NoiseConfig& noise, double dt);

/// Diagonal initial covariance used by the pipeline.
Covariance defaultInitialCovariance();

/// The kinematic model f(x, u, w) returned as an 18-vector in tangent
/// coordinates. dt enters through the position row's velocity-midpoint term.
StateVector kinematics(const State& x, const ImuSample& u, const NoiseVector& w, double dt);

/// x [+] (dt f(x, u, 0)). Throws std::invalid_argument when dt <= 0.
State propagateState(const State& x, const ImuSample& u, double dt);

/// x [+] (dt f(x, u, w)): the noisy transition used to define F_w.
State propagateWithNoise(const State& x, const ImuSample& u, const NoiseVector& w, double dt);

struct PropagationJacobians {
  Covariance F_x;
  ProcessJacobian F_w;
};

/// Error-state transition Jacobians at dx = 0, w = 0.
PropagationJacobians propagationJacobians(const State& x, const ImuSample& u, double dt);

/// F_x P F_x^T + F_w Q F_w^T, re-symmetrized.
Covariance propagateCovariance(const Covariance& P, const Covariance& F_x, const ProcessJacobian& F_w,
                               const NoiseCovariance& Q);
/// Dynamic-size overload; throws std::invalid_argument on dimension mismatch.
Eigen::MatrixXd propagateCovariance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& F_x,
                                    const Eigen::MatrixXd& F_w, const Eigen::MatrixXd& Q);

// --- LiDAR scans and motion compensation -----------------------------------

struct LidarPoint {
  Vec3 position = Vec3::Zero();  // LiDAR frame, meters
  /// Seconds before the scan end time at which the point was sampled (>= 0).
  double time_offset = 0.0;
  int ring = 0;
};

/// A sweep whose measurement time is its end time.
struct LidarScan {
  double end_time = 0.0;
  std::vector<LidarPoint> points;

  double duration() const;
};

struct UndistortionConfig {
  double max_imu_gap = 0.02;
};

/// Re-expresses every point in the LiDAR frame at the scan end time.
///
/// `imu` must be time-ordered and cover [end_time - duration, end_time]. Poses
/// during the sweep come from backward integration of the IMU from
/// `state_at_end`, using the mean of consecutive samples as the constant input
/// of each interval. Throws UndistortionError on coverage gaps.
LidarScan undistortScan(const LidarScan& scan, std::span<const ImuSample> imu, const State& state_at_end,
                        const RigidTransform& T_IL, const UndistortionConfig& cfg = {});

}  // namespace livo
