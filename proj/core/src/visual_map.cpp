#include "livo/visual_map.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

namespace livo {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::optional<Vec2> projectToImage(const Vec3& p_G, const RigidTransform& T_CG, const PinholeCamera& camera,
                                   double* depth = nullptr) {
  const Vec3 p_C = T_CG * p_G;
  if (!(p_C.z() > camera.minDepth())) return std::nullopt;
  const Vec2 px = camera.projectUnchecked(p_C);
  if (!camera.inImage(px)) return std::nullopt;
  if (depth) *depth = p_C.z();
  return px;
}

}  // namespace

std::uint64_t voxelKey(const Vec3& p, double voxel_size) {
  constexpr std::uint64_t kMask = (1ULL << 21) - 1;
  const auto cell = [&](double v) {
    return static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(v / voxel_size))) & kMask;
  };
  const std::uint64_t packed = (cell(p.x()) << 42) | (cell(p.y()) << 21) | cell(p.z());
  return splitmix64(packed);
}

std::optional<PatchPyramid> extractPatchPyramid(const ImagePyramid& pyramid, const Vec2& px0) {
  PatchPyramid out;
  const double half = 0.5 * (kPatchSize - 1);
  for (int l = 0; l < kPyramidLevels; ++l) {
    const Image& img = pyramid.level(l);
    const Vec2 c = toLevel(px0, l);
    if (!img.interpolable(c - Vec2::Constant(half)) || !img.interpolable(c + Vec2::Constant(half))) {
      return std::nullopt;
    }
    for (int y = 0; y < kPatchSize; ++y) {
      for (int x = 0; x < kPatchSize; ++x) {
        out[l][y * kPatchSize + x] =
            static_cast<float>(img.interpolateUnchecked(c + Vec2(patchOffset(x), patchOffset(y))));
      }
    }
  }
  return out;
}

double localCurvature(std::size_t index, std::span<const LidarPoint> scan) {
  constexpr std::size_t kHalf = 5;
  if (index < kHalf || index + kHalf >= scan.size()) return std::numeric_limits<double>::infinity();
  const LidarPoint& c = scan[index];
  Vec3 sum = Vec3::Zero();
  for (std::size_t j = index - kHalf; j <= index + kHalf; ++j) {
    if (scan[j].ring != c.ring) return std::numeric_limits<double>::infinity();
    sum += scan[j].position - c.position;
  }
  const double norm = 10.0 * c.position.norm();
  if (norm <= 0.0) return std::numeric_limits<double>::infinity();
  return sum.squaredNorm() / (norm * norm);
}

VisualMap::VisualMap(VisualMapConfig cfg) : cfg_(cfg) {
  if (!(cfg_.voxel_size > 0.0)) throw std::invalid_argument("VisualMap: voxel size must be positive");
}

std::uint64_t VisualMap::addPoint(MapPoint p) {
  if (p.patches.empty()) throw std::invalid_argument("VisualMap::addPoint: point without patches");
  p.id = points_.size();
  voxels_[voxelKey(p.position, cfg_.voxel_size)].push_back(p.id);
  points_.push_back(std::move(p));
  return points_.back().id;
}

std::span<const std::uint64_t> VisualMap::voxelPoints(const Vec3& p) const {
  const auto it = voxels_.find(voxelKey(p, cfg_.voxel_size));
  if (it == voxels_.end()) return {};
  return it->second;
}

std::vector<std::uint64_t> VisualMap::extractSubmap(std::span<const Vec3> scan_world, const RigidTransform& T_GC,
                                                    const PinholeCamera& camera) const {
  std::vector<std::uint64_t> out;
  if (points_.empty()) return out;
  std::vector<std::uint64_t> keys;
  keys.reserve(scan_world.size());
  for (const Vec3& p : scan_world) keys.push_back(voxelKey(p, cfg_.voxel_size));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  const RigidTransform T_CG = T_GC.inverse();
  for (const std::uint64_t key : keys) {
    const auto it = voxels_.find(key);
    if (it == voxels_.end()) continue;
    for (const std::uint64_t id : it->second) {
      if (projectToImage(points_[id].position, T_CG, camera)) out.push_back(id);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<OutlierDecision> VisualMap::classifyOutliers(std::span<const std::uint64_t> submap,
                                                         std::span<const Vec3> scan_world,
                                                         const RigidTransform& T_GC,
                                                         const PinholeCamera& camera) const {
  const RigidTransform T_CG = T_GC.inverse();
  std::vector<OutlierDecision> decisions;
  decisions.reserve(submap.size());

  // (a) nearest point per grid cell.
  std::map<std::pair<int, int>, std::size_t> best_in_cell;
  for (const std::uint64_t id : submap) {
    OutlierDecision d;
    d.id = id;
    const Vec3 p_C = T_CG * points_.at(id).position;
    d.depth = p_C.z();
    if (!(p_C.z() > camera.minDepth())) {
      d.status = PointStatus::kGridSuppressed;
      decisions.push_back(d);
      continue;
    }
    d.pixel = camera.projectUnchecked(p_C);
    decisions.push_back(d);
    const std::pair<int, int> cell{static_cast<int>(std::floor(d.pixel.x() / cfg_.grid_size)),
                                   static_cast<int>(std::floor(d.pixel.y() / cfg_.grid_size))};
    const auto [it, inserted] = best_in_cell.try_emplace(cell, decisions.size() - 1);
    if (!inserted) {
      OutlierDecision& incumbent = decisions[it->second];
      if (d.depth < incumbent.depth) {
        incumbent.status = PointStatus::kGridSuppressed;
        it->second = decisions.size() - 1;
      } else {
        decisions.back().status = PointStatus::kGridSuppressed;
      }
    }
  }

  // (b) occlusion by the most recent scan within a 9x9 neighborhood.
  const int w = camera.width();
  const int h = camera.height();
  std::vector<float> depth_buffer(static_cast<std::size_t>(w) * h, std::numeric_limits<float>::infinity());
  for (const Vec3& p : scan_world) {
    const Vec3 p_C = T_CG * p;
    if (!(p_C.z() > camera.minDepth())) continue;
    const Vec2 px = camera.projectUnchecked(p_C);
    const long u = std::lround(px.x());
    const long v = std::lround(px.y());
    if (u < 0 || v < 0 || u >= w || v >= h) continue;
    float& slot = depth_buffer[static_cast<std::size_t>(v) * w + u];
    slot = std::min(slot, static_cast<float>(p_C.z()));
  }
  const int r = cfg_.occlusion_half_window;
  for (OutlierDecision& d : decisions) {
    if (d.status != PointStatus::kAccepted) continue;
    const long u0 = std::lround(d.pixel.x());
    const long v0 = std::lround(d.pixel.y());
    const double limit = d.depth - cfg_.occlusion_margin;
    bool occluded = false;
    for (long v = std::max(0L, v0 - r); v <= std::min<long>(h - 1, v0 + r) && !occluded; ++v) {
      for (long u = std::max(0L, u0 - r); u <= std::min<long>(w - 1, u0 + r); ++u) {
        if (depth_buffer[static_cast<std::size_t>(v) * w + u] < limit) {
          occluded = true;
          break;
        }
      }
    }
    if (occluded) d.status = PointStatus::kOccluded;
  }
  return decisions;
}

std::vector<std::uint64_t> VisualMap::rejectOutliers(std::span<const std::uint64_t> submap,
                                                     std::span<const Vec3> scan_world, const RigidTransform& T_GC,
                                                     const PinholeCamera& camera) const {
  std::vector<std::uint64_t> accepted;
  for (const auto& d : classifyOutliers(submap, scan_world, T_GC, camera)) {
    if (d.status == PointStatus::kAccepted) accepted.push_back(d.id);
  }
  return accepted;
}

const PatchRecord& VisualMap::selectReferencePatch(const MapPoint& point, const Vec3& camera_center) {
  if (point.patches.empty()) throw std::logic_error("selectReferencePatch: map point has no patches");
  const Vec3 dir = (camera_center - point.position).normalized();
  const PatchRecord* best = &point.patches.front();
  double best_dot = best->view_dir.dot(dir);
  for (const PatchRecord& rec : point.patches) {
    const double d = rec.view_dir.dot(dir);
    if (d > best_dot + 1e-12 || (std::abs(d - best_dot) <= 1e-12 && rec.frame_id > best->frame_id)) {
      best = &rec;
      best_dot = d;
    }
  }
  return *best;
}

PatchRecord VisualMap::makeRecord(const PatchPyramid& pyr, const Vec3& position, const RigidTransform& T_GC,
                                  std::uint64_t frame_id, const Vec2& px) const {
  PatchRecord rec;
  rec.pyramid = pyr;
  rec.camera_pose = T_GC;
  rec.view_dir = (T_GC.trans - position).normalized();
  rec.frame_id = frame_id;
  rec.pixel = px;
  return rec;
}

std::size_t VisualMap::updatePatches(const ImagePyramid& pyramid, std::uint64_t frame_id, const RigidTransform& T_GC,
                                     const PinholeCamera& camera, std::span<const std::uint64_t> ids,
                                     std::span<const double> errors) {
  if (ids.size() != errors.size()) throw std::invalid_argument("updatePatches: ids/errors size mismatch");
  const RigidTransform T_CG = T_GC.inverse();
  std::size_t added = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!(errors[i] > cfg_.add_patch_error_threshold)) continue;
    MapPoint& pt = points_.at(ids[i]);
    if (pt.last_patch_frame_id == frame_id) continue;
    const auto px = projectToImage(pt.position, T_CG, camera);
    if (!px || !camera.inImage(*px, cfg_.patch_border)) continue;
    const bool stale = frame_id > pt.last_patch_frame_id + cfg_.patch_frame_gap;
    const bool moved = (*px - pt.last_patch_pixel).norm() > cfg_.patch_pixel_gap;
    if (!stale && !moved) continue;
    const auto pyr = extractPatchPyramid(pyramid, *px);
    if (!pyr) continue;
    pt.patches.push_back(makeRecord(*pyr, pt.position, T_GC, frame_id, *px));
    pt.last_patch_frame_id = frame_id;
    pt.last_patch_pixel = *px;
    ++added;
  }
  return added;
}

std::vector<std::uint64_t> VisualMap::addMapPoints(const ImagePyramid& pyramid, std::uint64_t frame_id,
                                                   std::span<const LidarPoint> scan, const RigidTransform& T_GL,
                                                   const RigidTransform& T_GC, const PinholeCamera& camera,
                                                   std::span<const Vec2> occupied_pixels) {
  const int gs = cfg_.grid_size;
  const int cols = (camera.width() + gs - 1) / gs;
  const int rows = (camera.height() + gs - 1) / gs;
  const auto cellIndex = [&](const Vec2& px) {
    return static_cast<int>(std::floor(px.y() / gs)) * cols + static_cast<int>(std::floor(px.x() / gs));
  };
  std::vector<char> occupied(static_cast<std::size_t>(cols) * rows, 0);
  for (const Vec2& px : occupied_pixels) {
    if (camera.inImage(px)) occupied[cellIndex(px)] = 1;
  }

  struct Candidate {
    double gradient = -1.0;
    std::size_t index = 0;
    Vec2 px;
    Vec3 p_G;
  };
  std::vector<Candidate> best(occupied.size());
  const RigidTransform T_CG = T_GC.inverse();
  const Image& img = pyramid.level(0);
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const Vec3 p_G = T_GL * scan[i].position;
    const auto px = projectToImage(p_G, T_CG, camera);
    if (!px || !camera.inImage(*px, cfg_.patch_border)) continue;
    const int cell = cellIndex(*px);
    if (occupied[cell]) continue;
    const double g = gradientMagnitude(img, static_cast<int>(std::lround(px->x())), static_cast<int>(std::lround(px->y())));
    if (g < cfg_.gradient_threshold || g <= best[cell].gradient) continue;
    if (localCurvature(i, scan) > cfg_.curvature_threshold) continue;
    best[cell] = {g, i, *px, p_G};
  }

  std::vector<std::uint64_t> added;
  for (const Candidate& c : best) {
    if (c.gradient < 0.0) continue;
    const auto pyr = extractPatchPyramid(pyramid, c.px);
    if (!pyr) continue;
    MapPoint mp;
    mp.position = c.p_G;
    mp.patches.push_back(makeRecord(*pyr, c.p_G, T_GC, frame_id, c.px));
    mp.last_patch_frame_id = frame_id;
    mp.last_patch_pixel = c.px;
    added.push_back(addPoint(std::move(mp)));
  }
  return added;
}

void writeOutlierDecisions(std::ostream& os, std::uint64_t frame_id, std::span<const OutlierDecision> decisions) {
  for (const auto& d : decisions) {
    const char* status = d.status == PointStatus::kAccepted ? "accepted"
                         : d.status == PointStatus::kOccluded ? "occluded"
                                                               : "suppressed";
    os << frame_id << ' ' << d.pixel.x() << ' ' << d.pixel.y() << ' ' << d.depth << ' ' << status << '\n';
  }
}

}  // namespace livo
