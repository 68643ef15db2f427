#include "livo/visual_measurement.hpp"

#include <algorithm>

namespace livo {

std::optional<Mat2> affineWarpMatrix(const PatchRecord& ref, const RigidTransform& T_GC_cur, const Vec3& point,
                                     const PinholeCamera& camera, double probe) {
  const RigidTransform T_CG_ref = ref.camera_pose.inverse();
  const RigidTransform T_cur_ref = T_GC_cur.inverse() * ref.camera_pose;
  const Vec3 p_ref = T_CG_ref * point;
  const double min_depth = camera.minDepth();
  if (!(p_ref.z() > min_depth)) return std::nullopt;

  const Vec2 px_ref = camera.projectUnchecked(p_ref);
  const Vec3 du_ref = camera.unproject(px_ref + Vec2(probe, 0.0), p_ref.z());
  const Vec3 dv_ref = camera.unproject(px_ref + Vec2(0.0, probe), p_ref.z());

  const Vec3 c = T_cur_ref * p_ref;
  const Vec3 du = T_cur_ref * du_ref;
  const Vec3 dv = T_cur_ref * dv_ref;
  if (!(c.z() > min_depth && du.z() > min_depth && dv.z() > min_depth)) return std::nullopt;

  const Vec2 px_cur = camera.projectUnchecked(c);
  Mat2 A;
  A.col(0) = (camera.projectUnchecked(du) - px_cur) / probe;
  A.col(1) = (camera.projectUnchecked(dv) - px_cur) / probe;
  if (!A.allFinite()) return std::nullopt;
  return A;
}

std::optional<PhotoResidualTerm> photometricResidual(const State& x, const SensorConfig& sensors,
                                                     const VisualCorrespondence& corr, const ImagePyramid& pyramid,
                                                     int level, const VisualMeasurementConfig& cfg) {
  const PinholeCamera camera = PinholeCamera(sensors.camera, cfg.min_depth).atLevel(level);
  const Mat3& R_IC = sensors.T_IC.rot;
  const Vec3 p_I = x.rot_GI.transpose() * (corr.position - x.pos_GI);
  const Vec3 p_C = sensors.T_IC.inverse() * p_I;
  if (!(p_C.z() > cfg.min_depth)) return std::nullopt;

  const Image& img = pyramid.level(level);
  const Vec2 center = camera.projectUnchecked(p_C);
  const Patch& ref = corr.reference->pyramid[static_cast<std::size_t>(level)];

  // d(p_C)/d(rot) and d(p_C)/d(pos); all other blocks are zero.
  Eigen::Matrix<double, 3, 6> dpc;
  dpc.leftCols<3>() = R_IC.transpose() * so3::hat(p_I);
  dpc.rightCols<3>() = -R_IC.transpose() * x.rot_GI.transpose();
  const Eigen::Matrix<double, 2, 6> dpx = camera.projectionJacobian(p_C) * dpc;

  PhotoResidualTerm term;
  term.point_id = corr.point_id;
  term.level = level;
  term.weight = 1.0 / (cfg.pixel_sigma * cfg.pixel_sigma);
  for (int iy = 0; iy < kPatchSize; ++iy) {
    for (int ix = 0; ix < kPatchSize; ++ix) {
      const int k = iy * kPatchSize + ix;
      const Vec2 sample = center + corr.warp * Vec2(patchOffset(ix), patchOffset(iy));
      if (!img.interpolable(sample)) return std::nullopt;
      term.residuals(k) = img.interpolateUnchecked(sample) - ref[static_cast<std::size_t>(k)];
      const Vec2 grad = img.gradientUnchecked(sample);
      const Eigen::Matrix<double, 1, 6> row = grad.transpose() * dpx;
      term.jacobian.block<1, 3>(k, idx::kRot) = row.leftCols<3>();
      term.jacobian.block<1, 3>(k, idx::kPos) = row.rightCols<3>();
    }
  }
  return term;
}

std::vector<VisualCorrespondence> prepareCorrespondences(const State& x, const SensorConfig& sensors,
                                                         const VisualMap& map,
                                                         std::span<const std::uint64_t> accepted,
                                                         const VisualMeasurementConfig& cfg) {
  const RigidTransform T_GC = cameraPose(x, sensors);
  const PinholeCamera camera(sensors.camera, cfg.min_depth);
  std::vector<VisualCorrespondence> out;
  out.reserve(accepted.size());
  for (const std::uint64_t id : accepted) {
    const MapPoint& mp = map.point(id);
    if (mp.patches.empty()) continue;
    const PatchRecord& ref = VisualMap::selectReferencePatch(mp, T_GC.trans);
    const auto warp = affineWarpMatrix(ref, T_GC, mp.position, camera, cfg.warp_probe);
    if (!warp) continue;
    out.push_back({id, mp.position, &ref, *warp});
  }
  std::sort(out.begin(), out.end(),
            [](const VisualCorrespondence& a, const VisualCorrespondence& b) { return a.point_id < b.point_id; });
  return out;
}

std::vector<PhotoResidualTerm> buildVisualTerms(const State& x, const SensorConfig& sensors,
                                                std::span<const VisualCorrespondence> correspondences,
                                                const ImagePyramid& pyramid, int level,
                                                const VisualMeasurementConfig& cfg) {
  std::vector<PhotoResidualTerm> terms;
  terms.reserve(correspondences.size());
  for (const auto& corr : correspondences) {
    if (auto term = photometricResidual(x, sensors, corr, pyramid, level, cfg)) terms.push_back(std::move(*term));
  }
  return terms;
}

}  // namespace livo
