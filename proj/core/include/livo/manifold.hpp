#pragma once

#include <Eigen/Core>

namespace livo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

namespace so3 {

/// Angles below this use the Taylor branch of Exp/Log.
inline constexpr double kSmallAngle = 1e-8;

Mat3 hat(const Vec3& v);
Vec3 vee(const Mat3& m);

/// Rodrigues exponential. Throws std::invalid_argument on non-finite input.
Mat3 exp(const Vec3& r);

/// Canonical rotation vector with angle in [0, pi].
///
/// At exactly pi the axis sign is ambiguous; the axis whose first nonzero
/// component is positive is returned, so Log(diag(1,-1,-1)) = (pi, 0, 0).
/// Throws std::invalid_argument if R deviates from SO(3) by more than 1e-6.
Vec3 log(const Mat3& R);

/// Right Jacobian Jr(r): Exp(r + d) ~= Exp(r) Exp(Jr(r) d).
Mat3 rightJacobian(const Vec3& r);
Mat3 rightJacobianInverse(const Vec3& r);

/// Projects a nearly-orthonormal matrix back onto SO(3).
Mat3 normalize(const Mat3& R);

bool isRotation(const Mat3& R, double tol = 1e-9);

}  // namespace so3

/// A point on SO(3) x R^n. The rotation is stored as a matrix.
struct ManifoldPoint {
  Mat3 rot = Mat3::Identity();
  Eigen::VectorXd vec;
};

/// Tangent vector of SO(3) x R^n: rotation vector plus Euclidean block.
struct TangentVector {
  Vec3 rot = Vec3::Zero();
  Eigen::VectorXd vec;
};

/// (R, a) [+] (r, b) = (R Exp(r), a + b)
ManifoldPoint boxplus(const ManifoldPoint& x, const TangentVector& delta);

/// (R1, a) [-] (R2, b) = (Log(R2^T R1), a - b)
TangentVector boxminus(const ManifoldPoint& x1, const ManifoldPoint& x2);

}  // namespace livo
