#include "livo/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace livo {
namespace so3 {

Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

Mat3 exp(const Vec3& r) {
  if (!r.allFinite()) {
    throw std::invalid_argument("so3::exp: non-finite rotation vector");
  }
  const double theta = r.norm();
  const Mat3 K = hat(r);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * K + c * K * K;
}

bool isRotation(const Mat3& R, double tol) {
  if (!R.allFinite()) return false;
  const double orth = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  return orth <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

namespace {

// First nonzero component positive.
Vec3 canonicalAxis(Vec3 axis) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(axis[i]) > 1e-12) {
      if (axis[i] < 0.0) axis = -axis;
      break;
    }
  }
  return axis;
}

}  // namespace

Vec3 log(const Mat3& R) {
  if (!isRotation(R, 1e-6)) {
    throw std::invalid_argument("so3::log: matrix is not a rotation");
  }
  const Vec3 w = 0.5 * vee(R - R.transpose());  // sin(theta) * axis
  const double sin_theta = w.norm();
  const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta < kSmallAngle) {
    return w;
  }
  if (cos_theta > 0.0 || sin_theta > 1e-4) {
    return theta * w / sin_theta;
  }

  // Near pi: recover the axis from the symmetric part,
  // (R + R^T)/2 = cos(theta) I + (1 - cos(theta)) n n^T.
  const Mat3 nnT = (0.5 * (R + R.transpose()) - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
  int k = 0;
  nnT.diagonal().maxCoeff(&k);
  Vec3 axis = nnT.col(k) / std::sqrt(std::max(nnT(k, k), 1e-300));
  axis.normalize();
  if (sin_theta > 1e-12) {
    if (axis.dot(w) < 0.0) axis = -axis;
  } else {
    axis = canonicalAxis(axis);
  }
  return theta * axis;
}

Mat3 rightJacobian(const Vec3& r) {
  const double theta = r.norm();
  const Mat3 K = hat(r);
  if (theta < 1e-5) {
    return Mat3::Identity() - 0.5 * K + K * K / 6.0;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * K +
         (theta - std::sin(theta)) / (t2 * theta) * K * K;
}

Mat3 rightJacobianInverse(const Vec3& r) {
  const double theta = r.norm();
  const Mat3 K = hat(r);
  if (theta < 1e-5) {
    return Mat3::Identity() + 0.5 * K + K * K / 12.0;
  }
  const double t2 = theta * theta;
  const double coeff = 1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * K + coeff * K * K;
}

Mat3 normalize(const Mat3& R) {
  Eigen::JacobiSVD<Mat3> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 U = svd.matrixU();
    U.col(2) *= -1.0;
    out = U * svd.matrixV().transpose();
  }
  return out;
}

}  // namespace so3

ManifoldPoint boxplus(const ManifoldPoint& x, const TangentVector& delta) {
  if (x.vec.size() != delta.vec.size()) {
    throw std::invalid_argument("boxplus: dimension mismatch");
  }
  return {x.rot * so3::exp(delta.rot), x.vec + delta.vec};
}

TangentVector boxminus(const ManifoldPoint& x1, const ManifoldPoint& x2) {
  if (x1.vec.size() != x2.vec.size()) {
    throw std::invalid_argument("boxminus: dimension mismatch");
  }
  return {so3::log(x2.rot.transpose() * x1.rot), x1.vec - x2.vec};
}

}  // namespace livo
