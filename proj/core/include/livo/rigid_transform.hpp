#pragma once

#include "livo/manifold.hpp"

namespace livo {

/// Rigid body transform T = (R, t) acting as p -> R p + t.
struct RigidTransform {
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 operator*(const Vec3& p) const { return rot * p + trans; }

  RigidTransform operator*(const RigidTransform& other) const {
    return {rot * other.rot, rot * other.trans + trans};
  }

  RigidTransform inverse() const {
    const Mat3 rt = rot.transpose();
    return {rt, -(rt * trans)};
  }
};

}  // namespace livo
