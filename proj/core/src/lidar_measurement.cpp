#include "livo/lidar_measurement.hpp"

#include <array>
#include <cmath>

namespace livo {

double pointToPlaneResidual(const State& x, const RigidTransform& T_IL, const Vec3& p_L, const Plane& plane) {
  const Vec3 p_G = x.rot_GI * (T_IL * p_L) + x.pos_GI;
  return plane.normal.dot(p_G - plane.centroid);
}

StateRow pointToPlaneJacobian(const State& x, const RigidTransform& T_IL, const Vec3& p_L, const Plane& plane) {
  // d/d(theta) of R Exp(theta) p_I = -R [p_I]x
  const Vec3 p_I = T_IL * p_L;
  StateRow J = StateRow::Zero();
  J.segment<3>(idx::kRot) = -plane.normal.transpose() * x.rot_GI * so3::hat(p_I);
  J.segment<3>(idx::kPos) = plane.normal.transpose();
  return J;
}

std::vector<LidarResidualTerm> residualTermsForScan(const State& x, const RigidTransform& T_IL,
                                                    const std::vector<LidarPoint>& scan,
                                                    const IncrementalKdTree& map,
                                                    const LidarMeasurementConfig& cfg,
                                                    LidarTermsStatus* status) {
  LidarTermsStatus local;
  std::vector<LidarResidualTerm> terms;
  if (map.empty()) {
    local.map_empty = true;
    if (status) *status = local;
    return terms;
  }
  terms.reserve(scan.size());
  const double weight = 1.0 / (cfg.point_sigma * cfg.point_sigma);
  const double max_nb_sq = cfg.max_neighbor_dist * cfg.max_neighbor_dist;
  const RigidTransform T_GL = x.pose() * T_IL;
  std::array<Vec3, kPlaneNeighbors> nb;
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const Vec3& p_L = scan[i].position;
    const Vec3 p_G = T_GL * p_L;
    const KnnResult knn = map.knn(p_G, kPlaneNeighbors);
    if (knn.is_short || knn.neighbors.back().sq_dist > max_nb_sq) {
      ++local.plane_failures;
      continue;
    }
    for (int j = 0; j < kPlaneNeighbors; ++j) nb[j] = knn.neighbors[j].point;
    const auto plane = fitPlane(nb, cfg.plane_max_dist, cfg.plane_min_planarity);
    if (!plane) {
      ++local.plane_failures;
      continue;
    }
    const double r = plane->signedDistance(p_G);
    if (std::abs(r) >= cfg.residual_gate) {
      ++local.gated;
      continue;
    }
    LidarResidualTerm term;
    term.residual = r;
    term.jacobian = pointToPlaneJacobian(x, T_IL, p_L, *plane);
    term.weight = weight;
    term.source_point = p_L;
    term.plane = *plane;
    term.point_index = i;
    terms.push_back(term);
  }
  if (status) *status = local;
  return terms;
}

}  // namespace livo
