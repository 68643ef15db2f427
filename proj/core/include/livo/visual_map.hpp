#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "livo/camera.hpp"
#include "livo/image.hpp"
#include "livo/state.hpp"

namespace livo {

inline constexpr int kPatchSize = 8;
inline constexpr int kPatchArea = kPatchSize * kPatchSize;

/// Offset of patch sample i (0..7) from the patch center, in level pixels.
inline constexpr double patchOffset(int i) { return i - 0.5 * (kPatchSize - 1); }

using Patch = std::array<float, kPatchArea>;  // row-major
using PatchPyramid = std::array<Patch, kPyramidLevels>;

struct PatchRecord {
  PatchPyramid pyramid{};
  RigidTransform camera_pose;  // T_GC at capture
  Vec3 view_dir = Vec3::UnitZ();  // unit, from the point towards the capture camera
  std::uint64_t frame_id = 0;
  Vec2 pixel = Vec2::Zero();  // level-0 projection at capture
};

struct MapPoint {
  std::uint64_t id = 0;
  Vec3 position = Vec3::Zero();
  std::vector<PatchRecord> patches;
  std::uint64_t last_patch_frame_id = 0;
  Vec2 last_patch_pixel = Vec2::Zero();
};

struct VisualMapConfig {
  double voxel_size = 0.5;
  int grid_size = 40;            // pixels, for both outlier rejection and point addition
  int occlusion_half_window = 4;  // 9x9 neighborhood
  double occlusion_margin = 0.1;  // meters
  double add_patch_error_threshold = 30.0;  // mean |r| in intensity units
  std::uint64_t patch_frame_gap = 20;
  double patch_pixel_gap = 40.0;
  double gradient_threshold = 20.0;
  double curvature_threshold = 1e-4;
  double patch_border = 4.0;  // pixels
};

/// 64-bit key of the voxel containing p. Integer cells within +-2^20 per axis
/// are packed injectively and then mixed with the (bijective) splitmix64
/// finalizer, so distinct cells in that range never collide.
std::uint64_t voxelKey(const Vec3& p, double voxel_size);

/// Samples an 8x8 patch at every pyramid level around the level-0 pixel
/// `px0`. Returns nullopt if any sample would leave an image.
std::optional<PatchPyramid> extractPatchPyramid(const ImagePyramid& pyramid, const Vec2& px0);

/// LOAM-style smoothness of scan[index] against its five predecessors and
/// successors on the same ring: |sum(p_j - p_i)|^2 / (10 |p_i|)^2.
/// Returns +inf if the window leaves the ring or the scan.
double localCurvature(std::size_t index, std::span<const LidarPoint> scan);

enum class PointStatus { kAccepted, kGridSuppressed, kOccluded };

struct OutlierDecision {
  std::uint64_t id = 0;
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;
  PointStatus status = PointStatus::kAccepted;
};

/// Voxel-hashed store of map points with attached reference patches.
class VisualMap {
 public:
  explicit VisualMap(VisualMapConfig cfg = {});

  const VisualMapConfig& config() const { return cfg_; }
  std::size_t size() const { return points_.size(); }
  const MapPoint& point(std::uint64_t id) const { return points_.at(id); }
  const std::vector<MapPoint>& points() const { return points_; }

  /// Stores the point and assigns its id. Patches must be nonempty.
  std::uint64_t addPoint(MapPoint p);
  /// Ids stored in the voxel containing p.
  std::span<const std::uint64_t> voxelPoints(const Vec3& p) const;

  /// Map points in voxels touched by `scan_world` that project into the image
  /// with positive depth. Sorted by id.
  std::vector<std::uint64_t> extractSubmap(std::span<const Vec3> scan_world, const RigidTransform& T_GC,
                                           const PinholeCamera& camera) const;

  /// Per-point decisions: lowest depth per grid cell, then the 9x9 occlusion
  /// test against the projected scan. Same order as `submap`.
  std::vector<OutlierDecision> classifyOutliers(std::span<const std::uint64_t> submap,
                                                std::span<const Vec3> scan_world, const RigidTransform& T_GC,
                                                const PinholeCamera& camera) const;
  /// Accepted subset of `submap`, in input order.
  std::vector<std::uint64_t> rejectOutliers(std::span<const std::uint64_t> submap, std::span<const Vec3> scan_world,
                                            const RigidTransform& T_GC, const PinholeCamera& camera) const;

  /// Patch observed from the direction closest to the current camera center;
  /// ties go to the most recent capture. Throws std::logic_error when the
  /// point has no patches.
  static const PatchRecord& selectReferencePatch(const MapPoint& point, const Vec3& camera_center);

  /// Adds patches from the current frame to poorly aligned points. `errors`
  /// pairs with `ids`. Returns the number of patches added.
  std::size_t updatePatches(const ImagePyramid& pyramid, std::uint64_t frame_id, const RigidTransform& T_GC,
                            const PinholeCamera& camera, std::span<const std::uint64_t> ids,
                            std::span<const double> errors);

  /// Seeds new map points from the scan: per grid cell, the projected point
  /// with the highest image gradient, skipping edges and occupied cells.
  std::vector<std::uint64_t> addMapPoints(const ImagePyramid& pyramid, std::uint64_t frame_id,
                                          std::span<const LidarPoint> scan, const RigidTransform& T_GL,
                                          const RigidTransform& T_GC, const PinholeCamera& camera,
                                          std::span<const Vec2> occupied_pixels);

 private:
  PatchRecord makeRecord(const PatchPyramid& pyr, const Vec3& position, const RigidTransform& T_GC,
                         std::uint64_t frame_id, const Vec2& px) const;

  VisualMapConfig cfg_;
  std::vector<MapPoint> points_;
  std::unordered_map<std::uint64_t, std::vector<std::uint64_t>> voxels_;
};

/// Debug dump: "frame_id u v depth status" per decision.
void writeOutlierDecisions(std::ostream& os, std::uint64_t frame_id, std::span<const OutlierDecision> decisions);

}  // namespace livo
