#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "livo/manifold.hpp"

namespace livo {

struct KdTreeConfig {
  /// Edge length of the downsampling cells; 0 disables downsampling.
  double downsample_resolution = 0.1;
  /// A subtree is rebuilt when its deleted/total ratio exceeds this.
  double delete_ratio = 0.5;
  /// ... or when one child holds more than this fraction of (size - 1).
  double balance_ratio = 0.7;
  /// Subtrees smaller than this are never rebuilt.
  int min_rebuild_size = 16;
};

struct Neighbor {
  Vec3 point;
  double sq_dist = 0.0;
};

struct KnnResult {
  std::vector<Neighbor> neighbors;  // ascending distance
  bool is_short = false;            // fewer than k points in the map
};

struct InsertStats {
  std::size_t inserted = 0;
  std::size_t replaced = 0;  // inserted points that evicted a cell occupant
  std::size_t dropped = 0;   // cell already held a point closer to its center
  std::size_t non_finite = 0;
};

/// Incremental k-d tree with insertion-time voxel downsampling and partial
/// rebuilds on imbalance. Each downsampling cell keeps the point nearest its
/// center; an evicted occupant is tombstoned and purged by the next rebuild
/// of its subtree. Queries are exact.
class IncrementalKdTree {
 public:
  explicit IncrementalKdTree(KdTreeConfig cfg = {});

  /// Returns the number of points that entered the tree.
  std::size_t insertPoints(std::span<const Vec3> points, InsertStats* stats = nullptr);

  /// Exact k nearest neighbors, ties broken lexicographically by coordinates.
  /// Throws EmptyMapError on an empty tree and std::invalid_argument if k < 1.
  KnnResult knn(const Vec3& query, int k) const;

  /// All live points inside the closed box [lo, hi].
  std::vector<Vec3> boxSearch(const Vec3& lo, const Vec3& hi) const;

  std::size_t size() const { return live_count_; }
  bool empty() const { return live_count_ == 0; }
  /// Height of the tree, for balance diagnostics.
  int depth() const;
  std::vector<Vec3> points() const;
  const KdTreeConfig& config() const { return cfg_; }

  /// "x y z" per line, meters.
  void writeText(std::ostream& os) const;

 private:
  struct Node {
    Vec3 point;
    Vec3 box_min;
    Vec3 box_max;
    int left = -1;
    int right = -1;
    int parent = -1;
    int axis = 0;
    int size = 1;     // nodes in subtree, including tombstones
    int deleted = 0;  // tombstones in subtree
    bool is_deleted = false;
  };

  int allocate(const Vec3& p, int axis);
  void refresh(int node);
  int build(std::vector<Vec3>& pts, std::size_t lo, std::size_t hi);
  void collectLive(int node, std::vector<Vec3>& out) const;
  void releaseSubtree(int node);
  void insertOne(const Vec3& p);
  void tombstone(int node);
  bool needsRebuild(int node) const;
  void boxSearchIds(int node, const Vec3& lo, const Vec3& hi, std::vector<int>& out) const;
  int depthOf(int node) const;

  KdTreeConfig cfg_;
  std::vector<Node> nodes_;
  std::vector<int> free_;
  int root_ = -1;
  std::size_t live_count_ = 0;
};

struct Plane {
  Vec3 normal = Vec3::UnitZ();  // unit, first nonzero component positive
  Vec3 centroid = Vec3::Zero();
  double max_point_dist = 0.0;

  double signedDistance(const Vec3& p) const { return normal.dot(p - centroid); }
};

inline constexpr int kPlaneNeighbors = 5;

/// Least-squares plane through exactly five neighbors. Returns nullopt when
/// the points are degenerate (rank < 2) or any point is farther than
/// `max_dist` from the fitted plane. Throws std::invalid_argument on a wrong
/// point count.
///
/// With `min_planarity` > 0 the set is also rejected when the middle scatter
/// eigenvalue is below min_planarity times the smallest one.
std::optional<Plane> fitPlane(std::span<const Vec3> neighbors, double max_dist = 0.1, double min_planarity = 0.0);

}  // namespace livo
