#include "livo/camera.hpp"

#include "livo/errors.hpp"

namespace livo {

PinholeCamera::PinholeCamera(const CameraIntrinsics& k, double min_depth)
    : fx_(k.fx), fy_(k.fy), cx_(k.cx), cy_(k.cy), width_(k.width), height_(k.height), min_depth_(min_depth) {}

PinholeCamera PinholeCamera::atLevel(int level) const {
  const double s = 1.0 / static_cast<double>(1 << level);
  PinholeCamera c = *this;
  c.fx_ = fx_ * s;
  c.fy_ = fy_ * s;
  c.cx_ = (cx_ + 0.5) * s - 0.5;
  c.cy_ = (cy_ + 0.5) * s - 0.5;
  c.width_ = width_ >> level;
  c.height_ = height_ >> level;
  return c;
}

Vec2 PinholeCamera::project(const Vec3& p_C) const {
  if (!(p_C.z() > min_depth_)) throw BehindCameraError("PinholeCamera::project: point behind camera");
  return projectUnchecked(p_C);
}

Mat23 PinholeCamera::projectionJacobian(const Vec3& p_C) const {
  const double iz = 1.0 / p_C.z();
  const double iz2 = iz * iz;
  Mat23 J;
  J << fx_ * iz, 0.0, -fx_ * p_C.x() * iz2,
       0.0, fy_ * iz, -fy_ * p_C.y() * iz2;
  return J;
}

Vec3 PinholeCamera::unproject(const Vec2& px, double z) const {
  return {z * (px.x() - cx_) / fx_, z * (px.y() - cy_) / fy_, z};
}

bool PinholeCamera::inImage(const Vec2& px, double border) const {
  return px.x() >= border && px.y() >= border && px.x() <= width_ - 1 - border && px.y() <= height_ - 1 - border;
}

}  // namespace livo
