#include "livo/state.hpp"

#include <stdexcept>

#include <Eigen/Dense>

namespace livo {

State boxplus(const State& x, const StateVector& dx) {
  State out;
  out.rot_GI = x.rot_GI * so3::exp(dx.segment<3>(idx::kRot));
  out.pos_GI = x.pos_GI + dx.segment<3>(idx::kPos);
  out.vel_G = x.vel_G + dx.segment<3>(idx::kVel);
  out.bias_gyro = x.bias_gyro + dx.segment<3>(idx::kBiasGyro);
  out.bias_accel = x.bias_accel + dx.segment<3>(idx::kBiasAccel);
  out.gravity_G = x.gravity_G + dx.segment<3>(idx::kGravity);
  return out;
}

StateVector boxminus(const State& x1, const State& x2) {
  StateVector d;
  d.segment<3>(idx::kRot) = so3::log(x2.rot_GI.transpose() * x1.rot_GI);
  d.segment<3>(idx::kPos) = x1.pos_GI - x2.pos_GI;
  d.segment<3>(idx::kVel) = x1.vel_G - x2.vel_G;
  d.segment<3>(idx::kBiasGyro) = x1.bias_gyro - x2.bias_gyro;
  d.segment<3>(idx::kBiasAccel) = x1.bias_accel - x2.bias_accel;
  d.segment<3>(idx::kGravity) = x1.gravity_G - x2.gravity_G;
  return d;
}

ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t) {
  const double span = b.timestamp - a.timestamp;
  const double s = span > 0.0 ? (t - a.timestamp) / span : 0.0;
  ImuSample out;
  out.timestamp = t;
  out.gyro = a.gyro + s * (b.gyro - a.gyro);
  out.accel = a.accel + s * (b.accel - a.accel);
  return out;
}

void NoiseConfig::validate() const {
  if (!(sigma_gyro > 0.0 && sigma_accel > 0.0 && sigma_bias_gyro_walk > 0.0 && sigma_bias_accel_walk > 0.0)) {
    throw std::invalid_argument("NoiseConfig: all standard deviations must be strictly positive");
  }
}

NoiseCovariance discreteNoise(const NoiseConfig& noise, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discreteNoise: dt must be positive");
  NoiseCovariance Q = NoiseCovariance::Zero();
  const auto set = [&](int offset, double sigma) {
    Q.block<3, 3>(offset, offset) = Mat3::Identity() * (sigma * sigma / dt);
  };
  set(noise_idx::kGyro, noise.sigma_gyro);
  set(noise_idx::kAccel, noise.sigma_accel);
  set(noise_idx::kBiasGyro, noise.sigma_bias_gyro_walk);
  set(noise_idx::kBiasAccel, noise.sigma_bias_accel_walk);
  return Q;
}

Covariance defaultInitialCovariance() {
  Covariance P = Covariance::Zero();
  P.diagonal().segment<3>(idx::kRot).setConstant(1e-2);
  P.diagonal().segment<3>(idx::kPos).setConstant(1e-4);
  P.diagonal().segment<3>(idx::kVel).setConstant(1e-4);
  P.diagonal().segment<3>(idx::kBiasGyro).setConstant(1e-3);
  P.diagonal().segment<3>(idx::kBiasAccel).setConstant(1e-3);
  P.diagonal().segment<3>(idx::kGravity).setConstant(1e-4);
  return P;
}

StateVector kinematics(const State& x, const ImuSample& u, const NoiseVector& w, double dt) {
  const Vec3 acc_G =
      x.rot_GI * (u.accel - x.bias_accel - w.segment<3>(noise_idx::kAccel)) + x.gravity_G;
  StateVector f;
  f.segment<3>(idx::kRot) = u.gyro - x.bias_gyro - w.segment<3>(noise_idx::kGyro);
  f.segment<3>(idx::kPos) = x.vel_G + 0.5 * acc_G * dt;
  f.segment<3>(idx::kVel) = acc_G;
  f.segment<3>(idx::kBiasGyro) = w.segment<3>(noise_idx::kBiasGyro);
  f.segment<3>(idx::kBiasAccel) = w.segment<3>(noise_idx::kBiasAccel);
  f.segment<3>(idx::kGravity).setZero();
  return f;
}

State propagateWithNoise(const State& x, const ImuSample& u, const NoiseVector& w, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("propagateState: dt must be positive");
  return boxplus(x, dt * kinematics(x, u, w, dt));
}

State propagateState(const State& x, const ImuSample& u, double dt) {
  return propagateWithNoise(x, u, NoiseVector::Zero(), dt);
}

PropagationJacobians propagationJacobians(const State& x, const ImuSample& u, double dt) {
  const Vec3 phi = (u.gyro - x.bias_gyro) * dt;
  const Vec3 acc = u.accel - x.bias_accel;
  const Mat3& R = x.rot_GI;
  const Mat3 R_acc_hat = R * so3::hat(acc);
  const Mat3 Jr = so3::rightJacobian(phi);
  const Mat3 I3 = Mat3::Identity();
  const double half_dt2 = 0.5 * dt * dt;

  PropagationJacobians J;
  J.F_x.setIdentity();
  J.F_x.block<3, 3>(idx::kRot, idx::kRot) = so3::exp(phi).transpose();
  J.F_x.block<3, 3>(idx::kRot, idx::kBiasGyro) = -Jr * dt;

  J.F_x.block<3, 3>(idx::kPos, idx::kRot) = -half_dt2 * R_acc_hat;
  J.F_x.block<3, 3>(idx::kPos, idx::kVel) = I3 * dt;
  J.F_x.block<3, 3>(idx::kPos, idx::kBiasAccel) = -half_dt2 * R;
  J.F_x.block<3, 3>(idx::kPos, idx::kGravity) = I3 * half_dt2;

  J.F_x.block<3, 3>(idx::kVel, idx::kRot) = -dt * R_acc_hat;
  J.F_x.block<3, 3>(idx::kVel, idx::kBiasAccel) = -dt * R;
  J.F_x.block<3, 3>(idx::kVel, idx::kGravity) = I3 * dt;

  J.F_w.setZero();
  J.F_w.block<3, 3>(idx::kRot, noise_idx::kGyro) = -Jr * dt;
  J.F_w.block<3, 3>(idx::kPos, noise_idx::kAccel) = -half_dt2 * R;
  J.F_w.block<3, 3>(idx::kVel, noise_idx::kAccel) = -dt * R;
  J.F_w.block<3, 3>(idx::kBiasGyro, noise_idx::kBiasGyro) = I3 * dt;
  J.F_w.block<3, 3>(idx::kBiasAccel, noise_idx::kBiasAccel) = I3 * dt;
  return J;
}

Covariance propagateCovariance(const Covariance& P, const Covariance& F_x, const ProcessJacobian& F_w,
                               const NoiseCovariance& Q) {
  const Covariance out = F_x * P * F_x.transpose() + F_w * Q * F_w.transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd propagateCovariance(const Eigen::MatrixXd& P, const Eigen::MatrixXd& F_x,
                                    const Eigen::MatrixXd& F_w, const Eigen::MatrixXd& Q) {
  const auto n = P.rows();
  if (P.cols() != n || F_x.rows() != n || F_x.cols() != n || F_w.rows() != n || Q.rows() != Q.cols() ||
      F_w.cols() != Q.rows()) {
    throw std::invalid_argument("propagateCovariance: dimension mismatch");
  }
  const Eigen::MatrixXd out = F_x * P * F_x.transpose() + F_w * Q * F_w.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace livo
