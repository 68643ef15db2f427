#include "livo/lidar_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "livo/errors.hpp"

namespace livo {

namespace {

// Strict total order on neighbors: distance, then coordinates.
bool closer(const Neighbor& a, const Neighbor& b) {
  if (a.sq_dist != b.sq_dist) return a.sq_dist < b.sq_dist;
  if (a.point.x() != b.point.x()) return a.point.x() < b.point.x();
  if (a.point.y() != b.point.y()) return a.point.y() < b.point.y();
  return a.point.z() < b.point.z();
}

struct FartherFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(a, b); }
};

using NeighborHeap = std::priority_queue<Neighbor, std::vector<Neighbor>, FartherFirst>;

double boxSqDist(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  double d = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double e = q[i] < lo[i] ? lo[i] - q[i] : (q[i] > hi[i] ? q[i] - hi[i] : 0.0);
    d += e * e;
  }
  return d;
}

Eigen::Vector3i cellOf(const Vec3& p, double res) {
  return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / res)), static_cast<int>(std::floor(p.y() / res)),
                         static_cast<int>(std::floor(p.z() / res)));
}

}  // namespace

IncrementalKdTree::IncrementalKdTree(KdTreeConfig cfg) : cfg_(cfg) {
  if (cfg_.downsample_resolution < 0.0) {
    throw std::invalid_argument("IncrementalKdTree: negative downsample resolution");
  }
}

int IncrementalKdTree::allocate(const Vec3& p, int axis) {
  Node n;
  n.point = p;
  n.box_min = p;
  n.box_max = p;
  n.axis = axis;
  if (!free_.empty()) {
    const int id = free_.back();
    free_.pop_back();
    nodes_[id] = n;
    return id;
  }
  nodes_.push_back(n);
  return static_cast<int>(nodes_.size()) - 1;
}

void IncrementalKdTree::refresh(int node) {
  Node& n = nodes_[node];
  n.size = 1;
  n.deleted = n.is_deleted ? 1 : 0;
  n.box_min = n.point;
  n.box_max = n.point;
  for (const int c : {n.left, n.right}) {
    if (c < 0) continue;
    const Node& child = nodes_[c];
    n.size += child.size;
    n.deleted += child.deleted;
    n.box_min = n.box_min.cwiseMin(child.box_min);
    n.box_max = n.box_max.cwiseMax(child.box_max);
  }
}

int IncrementalKdTree::build(std::vector<Vec3>& pts, std::size_t lo, std::size_t hi) {
  if (lo >= hi) return -1;
  Vec3 mn = pts[lo];
  Vec3 mx = pts[lo];
  for (std::size_t i = lo + 1; i < hi; ++i) {
    mn = mn.cwiseMin(pts[i]);
    mx = mx.cwiseMax(pts[i]);
  }
  int axis = 0;
  (mx - mn).maxCoeff(&axis);
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(pts.begin() + static_cast<std::ptrdiff_t>(lo), pts.begin() + static_cast<std::ptrdiff_t>(mid),
                   pts.begin() + static_cast<std::ptrdiff_t>(hi),
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  const int node = allocate(pts[mid], axis);
  const int left = build(pts, lo, mid);
  const int right = build(pts, mid + 1, hi);
  nodes_[node].left = left;
  nodes_[node].right = right;
  if (left >= 0) nodes_[left].parent = node;
  if (right >= 0) nodes_[right].parent = node;
  refresh(node);
  return node;
}

void IncrementalKdTree::collectLive(int node, std::vector<Vec3>& out) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  collectLive(n.left, out);
  if (!n.is_deleted) out.push_back(n.point);
  collectLive(n.right, out);
}

void IncrementalKdTree::releaseSubtree(int node) {
  if (node < 0) return;
  releaseSubtree(nodes_[node].left);
  releaseSubtree(nodes_[node].right);
  free_.push_back(node);
}

bool IncrementalKdTree::needsRebuild(int node) const {
  const Node& n = nodes_[node];
  if (n.size < cfg_.min_rebuild_size) return false;
  if (static_cast<double>(n.deleted) > cfg_.delete_ratio * n.size) return true;
  const int ls = n.left >= 0 ? nodes_[n.left].size : 0;
  const int rs = n.right >= 0 ? nodes_[n.right].size : 0;
  return static_cast<double>(std::max(ls, rs)) > cfg_.balance_ratio * (n.size - 1);
}

void IncrementalKdTree::insertOne(const Vec3& p) {
  if (root_ < 0) {
    root_ = allocate(p, 0);
    return;
  }
  std::vector<int> path;
  int cur = root_;
  while (true) {
    path.push_back(cur);
    Node& n = nodes_[cur];
    const bool go_left = p[n.axis] < n.point[n.axis];
    const int next = go_left ? n.left : n.right;
    if (next < 0) {
      const int leaf = allocate(p, (nodes_[cur].axis + 1) % 3);
      nodes_[leaf].parent = cur;
      if (go_left) {
        nodes_[cur].left = leaf;
      } else {
        nodes_[cur].right = leaf;
      }
      break;
    }
    cur = next;
  }
  for (auto it = path.rbegin(); it != path.rend(); ++it) refresh(*it);
  // Rebuild the topmost unbalanced subtree on the insertion path.
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!needsRebuild(path[i])) continue;
    std::vector<Vec3> live;
    collectLive(path[i], live);
    releaseSubtree(path[i]);
    const int rebuilt = build(live, 0, live.size());
    if (rebuilt >= 0) nodes_[rebuilt].parent = i == 0 ? -1 : path[i - 1];
    if (i == 0) {
      root_ = rebuilt;
    } else {
      Node& parent = nodes_[path[i - 1]];
      if (parent.left == path[i]) {
        parent.left = rebuilt;
      } else {
        parent.right = rebuilt;
      }
      for (std::size_t j = i; j-- > 0;) refresh(path[j]);
    }
    break;
  }
}

void IncrementalKdTree::tombstone(int node) {
  nodes_[node].is_deleted = true;
  for (int cur = node; cur >= 0; cur = nodes_[cur].parent) refresh(cur);
  --live_count_;
}

std::size_t IncrementalKdTree::insertPoints(std::span<const Vec3> points, InsertStats* stats) {
  InsertStats local;
  const double res = cfg_.downsample_resolution;
  for (const Vec3& p : points) {
    if (!p.allFinite()) {
      ++local.non_finite;
      continue;
    }
    if (res > 0.0 && root_ >= 0) {
      const Eigen::Vector3i cell = cellOf(p, res);
      const Vec3 lo = cell.cast<double>() * res;
      const Vec3 center = lo + Vec3::Constant(0.5 * res);
      // Padded so that rounding in cellOf cannot hide an occupant; the cell
      // test below is authoritative.
      const Vec3 pad = Vec3::Constant(1e-6 * res);
      std::vector<int> ids;
      boxSearchIds(root_, lo - pad, lo + Vec3::Constant(res) + pad, ids);
      int occupant = -1;
      double occupant_dist = std::numeric_limits<double>::infinity();
      for (const int id : ids) {
        if (cellOf(nodes_[id].point, res) != cell) continue;
        const double d = (nodes_[id].point - center).squaredNorm();
        if (d < occupant_dist) {
          occupant_dist = d;
          occupant = id;
        }
      }
      if (occupant >= 0) {
        if ((p - center).squaredNorm() >= occupant_dist) {
          ++local.dropped;
          continue;
        }
        tombstone(occupant);
        ++local.replaced;
      }
    }
    insertOne(p);
    ++live_count_;
    ++local.inserted;
  }
  if (stats) *stats = local;
  return local.inserted;
}

void IncrementalKdTree::boxSearchIds(int node, const Vec3& lo, const Vec3& hi, std::vector<int>& out) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  if ((n.box_max.array() < lo.array()).any() || (n.box_min.array() > hi.array()).any()) return;
  if (n.deleted == n.size) return;
  if (!n.is_deleted && (n.point.array() >= lo.array()).all() && (n.point.array() <= hi.array()).all()) {
    out.push_back(node);
  }
  boxSearchIds(n.left, lo, hi, out);
  boxSearchIds(n.right, lo, hi, out);
}

std::vector<Vec3> IncrementalKdTree::boxSearch(const Vec3& lo, const Vec3& hi) const {
  std::vector<int> ids;
  boxSearchIds(root_, lo, hi, ids);
  std::vector<Vec3> out;
  out.reserve(ids.size());
  for (const int id : ids) out.push_back(nodes_[id].point);
  return out;
}

KnnResult IncrementalKdTree::knn(const Vec3& query, int k) const {
  if (k < 1) throw std::invalid_argument("knn: k must be at least 1");
  if (live_count_ == 0) throw EmptyMapError("knn: map is empty");

  NeighborHeap heap;
  const auto k_size = static_cast<std::size_t>(k);
  const auto search = [&](auto&& self, int node) -> void {
    if (node < 0) return;
    const Node& n = nodes_[node];
    if (n.deleted == n.size) return;
    if (heap.size() == k_size && boxSqDist(query, n.box_min, n.box_max) > heap.top().sq_dist) return;
    if (!n.is_deleted) {
      Neighbor cand{n.point, (n.point - query).squaredNorm()};
      if (heap.size() < k_size) {
        heap.push(cand);
      } else if (closer(cand, heap.top())) {
        heap.pop();
        heap.push(cand);
      }
    }
    const bool left_first = query[n.axis] < n.point[n.axis];
    self(self, left_first ? n.left : n.right);
    self(self, left_first ? n.right : n.left);
  };
  search(search, root_);

  KnnResult result;
  result.neighbors.resize(heap.size());
  for (std::size_t i = heap.size(); i-- > 0;) {
    result.neighbors[i] = heap.top();
    heap.pop();
  }
  result.is_short = result.neighbors.size() < k_size;
  return result;
}

int IncrementalKdTree::depthOf(int node) const {
  if (node < 0) return 0;
  return 1 + std::max(depthOf(nodes_[node].left), depthOf(nodes_[node].right));
}

int IncrementalKdTree::depth() const { return depthOf(root_); }

std::vector<Vec3> IncrementalKdTree::points() const {
  std::vector<Vec3> out;
  out.reserve(live_count_);
  collectLive(root_, out);
  return out;
}

void IncrementalKdTree::writeText(std::ostream& os) const {
  for (const Vec3& p : points()) os << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

std::optional<Plane> fitPlane(std::span<const Vec3> neighbors, double max_dist, double min_planarity) {
  if (neighbors.size() != static_cast<std::size_t>(kPlaneNeighbors)) {
    throw std::invalid_argument("fitPlane: expected exactly 5 points");
  }
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : neighbors) centroid += p;
  centroid /= static_cast<double>(neighbors.size());
  Mat3 scatter = Mat3::Zero();
  for (const Vec3& p : neighbors) scatter += (p - centroid) * (p - centroid).transpose();

  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-10 * ev(2)) return std::nullopt;
  // Nearly collinear sets leave the normal free to spin about the line.
  if (ev(1) < min_planarity * ev(0)) return std::nullopt;

  Plane plane;
  plane.centroid = centroid;
  plane.normal = eig.eigenvectors().col(0).normalized();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(plane.normal[i]) > 1e-12) {
      if (plane.normal[i] < 0.0) plane.normal = -plane.normal;
      break;
    }
  }
  for (const Vec3& p : neighbors) {
    const double d = std::abs(plane.signedDistance(p));
    if (d > max_dist) return std::nullopt;
    plane.max_point_dist = std::max(plane.max_point_dist, d);
  }
  return plane;
}

}  // namespace livo
