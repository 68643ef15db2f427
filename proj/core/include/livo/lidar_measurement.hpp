#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "livo/lidar_map.hpp"
#include "livo/state.hpp"

namespace livo {

using StateRow = Eigen::Matrix<double, 1, kStateDim>;

struct LidarMeasurementConfig {
  double plane_max_dist = 0.1;   // fitPlane rejection threshold
  double residual_gate = 0.5;    // |r| above this is discarded
  double point_sigma = 0.02;     // isotropic per-point std-dev, meters
  double max_neighbor_dist = 2.0;  // farthest of the 5 neighbors, meters
  double plane_min_planarity = 0.0;  // see fitPlane
};

struct LidarResidualTerm {
  double residual = 0.0;
  StateRow jacobian = StateRow::Zero();
  double weight = 1.0;
  Vec3 source_point = Vec3::Zero();  // LiDAR frame
  Plane plane;
  std::size_t point_index = 0;  // index into the scan
};

/// u^T (T_GI T_IL p_L - q): signed distance of the transformed point.
double pointToPlaneResidual(const State& x, const RigidTransform& T_IL, const Vec3& p_L, const Plane& plane);

/// Derivative of pointToPlaneResidual w.r.t. the error state. Only the
/// attitude and position blocks are nonzero.
StateRow pointToPlaneJacobian(const State& x, const RigidTransform& T_IL, const Vec3& p_L, const Plane& plane);

struct LidarTermsStatus {
  bool map_empty = false;
  std::size_t plane_failures = 0;
  std::size_t gated = 0;
};

/// Transforms each scan point with `x`, fits a plane to its five nearest map
/// neighbors and keeps gated residuals. Output is ordered by point index.
std::vector<LidarResidualTerm> residualTermsForScan(const State& x, const RigidTransform& T_IL,
                                                    const std::vector<LidarPoint>& scan,
                                                    const IncrementalKdTree& map,
                                                    const LidarMeasurementConfig& cfg = {},
                                                    LidarTermsStatus* status = nullptr);

}  // namespace livo
