#pragma once

#include <Eigen/Core>

#include "livo/image.hpp"
#include "livo/state.hpp"

namespace livo {

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Pinhole model over CameraIntrinsics, optionally rescaled to a pyramid level.
class PinholeCamera {
 public:
  explicit PinholeCamera(const CameraIntrinsics& k, double min_depth = 0.1);

  /// Intrinsics of pyramid level `level` (consistent with toLevel()).
  PinholeCamera atLevel(int level) const;

  /// Throws BehindCameraError when p_C.z <= min_depth.
  Vec2 project(const Vec3& p_C) const;
  Vec2 projectUnchecked(const Vec3& p_C) const {
    return {fx_ * p_C.x() / p_C.z() + cx_, fy_ * p_C.y() / p_C.z() + cy_};
  }
  /// d(pixel)/d(p_C).
  Mat23 projectionJacobian(const Vec3& p_C) const;
  /// Camera-frame point at depth z along the ray through px.
  Vec3 unproject(const Vec2& px, double z) const;

  bool inImage(const Vec2& px, double border = 0.0) const;

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double minDepth() const { return min_depth_; }

 private:
  double fx_, fy_, cx_, cy_;
  int width_, height_;
  double min_depth_;
};

}  // namespace livo
