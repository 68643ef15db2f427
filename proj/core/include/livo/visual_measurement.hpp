#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "livo/camera.hpp"
#include "livo/image.hpp"
#include "livo/state.hpp"
#include "livo/visual_map.hpp"

namespace livo {

using Mat2 = Eigen::Matrix2d;
using PatchResidual = Eigen::Matrix<double, kPatchArea, 1>;
using PatchJacobian = Eigen::Matrix<double, kPatchArea, kStateDim>;

struct VisualMeasurementConfig {
  double pixel_sigma = 10.0;  // intensity noise std-dev, 8-bit units
  double min_depth = 0.1;
  double warp_probe = 4.0;  // level-0 pixels between the patch center and each probe
};

struct PhotoResidualTerm {
  PatchResidual residuals = PatchResidual::Zero();  // row-major 8x8
  PatchJacobian jacobian = PatchJacobian::Zero();
  double weight = 1.0;
  std::uint64_t point_id = 0;
  int level = 0;
};

/// Reference patch and affine warp for one map point, fixed for one image.
struct VisualCorrespondence {
  std::uint64_t point_id = 0;
  Vec3 position = Vec3::Zero();
  const PatchRecord* reference = nullptr;
  Mat2 warp = Mat2::Identity();
};

/// Camera pose in the global frame for an IMU state.
inline RigidTransform cameraPose(const State& x, const SensorConfig& sensors) { return x.pose() * sensors.T_IC; }

/// Affine map from reference-patch offsets to current-image offsets (level 0).
/// Built from two probes `probe` pixels along each patch axis, back-projected
/// to the point's reference depth and re-projected into the current view.
/// Returns nullopt if any projection fails.
std::optional<Mat2> affineWarpMatrix(const PatchRecord& ref, const RigidTransform& T_GC_cur, const Vec3& point,
                                     const PinholeCamera& camera, double probe = 4.0);

/// Residuals I_l(pi_l(p_C) + A d) - Q_l(d) over the 8x8 offsets d and their
/// error-state Jacobian (attitude and position blocks only; A is held fixed).
/// Returns nullopt if the point is behind the camera or any sample leaves the
/// interpolation-safe region.
std::optional<PhotoResidualTerm> photometricResidual(const State& x, const SensorConfig& sensors,
                                                     const VisualCorrespondence& corr, const ImagePyramid& pyramid,
                                                     int level, const VisualMeasurementConfig& cfg = {});

/// Picks the reference patch and computes the warp for each accepted point
/// at the given (predicted) state. Points whose warp fails are dropped.
std::vector<VisualCorrespondence> prepareCorrespondences(const State& x, const SensorConfig& sensors,
                                                         const VisualMap& map,
                                                         std::span<const std::uint64_t> accepted,
                                                         const VisualMeasurementConfig& cfg = {});

/// Valid terms at `level`, ordered by point id.
std::vector<PhotoResidualTerm> buildVisualTerms(const State& x, const SensorConfig& sensors,
                                                std::span<const VisualCorrespondence> correspondences,
                                                const ImagePyramid& pyramid, int level,
                                                const VisualMeasurementConfig& cfg = {});

}  // namespace livo
