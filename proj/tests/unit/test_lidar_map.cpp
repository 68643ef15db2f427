#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "livo/errors.hpp"
#include "livo/lidar_map.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace livo;
using livo::testing::bruteForceKnn;
using livo::testing::DownsampleModel;
using livo::testing::randomVec;

namespace {

bool sameNeighbors(const std::vector<Neighbor>& a, const std::vector<Neighbor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].point != b[i].point || a[i].sq_dist != b[i].sq_dist) return false;
  }
  return true;
}

std::vector<Vec3> sorted(std::vector<Vec3> v) {
  std::sort(v.begin(), v.end(), [](const Vec3& a, const Vec3& b) {
    return std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z());
  });
  return v;
}

}  // namespace

TEST(KdTree, EmptyMapAndBadK) {
  IncrementalKdTree tree;
  EXPECT_TRUE(tree.empty());
  EXPECT_THROW(tree.knn(Vec3::Zero(), 1), EmptyMapError);
  const Vec3 p(1, 2, 3);
  tree.insertPoints(std::span<const Vec3>(&p, 1));
  EXPECT_THROW(tree.knn(Vec3::Zero(), 0), std::invalid_argument);
}

TEST(KdTree, SinglePoint) {
  IncrementalKdTree tree;
  const Vec3 p(0.3, -1.2, 4.0);
  tree.insertPoints(std::span<const Vec3>(&p, 1));
  const KnnResult r = tree.knn(Vec3(10, 10, 10), 1);
  ASSERT_EQ(r.neighbors.size(), 1u);
  EXPECT_EQ(r.neighbors[0].point, p);
  EXPECT_FALSE(r.is_short);
  const KnnResult r5 = tree.knn(Vec3::Zero(), 5);
  EXPECT_EQ(r5.neighbors.size(), 1u);
  EXPECT_TRUE(r5.is_short);
}

TEST(KdTree, QueryOnStoredPointHasZeroDistance) {
  std::mt19937_64 rng(1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.push_back(randomVec(rng, 5.0));
  IncrementalKdTree tree;
  tree.insertPoints(pts);
  const std::vector<Vec3> stored = tree.points();
  for (int i = 0; i < 50; ++i) {
    const Vec3& q = stored[static_cast<std::size_t>(i) * 3];
    const KnnResult r = tree.knn(q, 3);
    EXPECT_EQ(r.neighbors[0].sq_dist, 0.0);
    EXPECT_EQ(r.neighbors[0].point, q);
  }
}

TEST(KdTree, DuplicateInsertIsDropped) {
  IncrementalKdTree tree;
  const Vec3 p(1.23, 4.56, -7.89);
  EXPECT_EQ(tree.insertPoints(std::span<const Vec3>(&p, 1)), 1u);
  InsertStats st;
  EXPECT_EQ(tree.insertPoints(std::span<const Vec3>(&p, 1), &st), 0u);
  EXPECT_EQ(st.dropped, 1u);
  EXPECT_EQ(tree.size(), 1u);
}

TEST(KdTree, CellKeepsPointNearestCenter) {
  KdTreeConfig cfg;
  cfg.downsample_resolution = 1.0;
  IncrementalKdTree tree(cfg);
  const std::vector<Vec3> first{Vec3(0.1, 0.1, 0.1)};
  tree.insertPoints(first);
  InsertStats st;
  const std::vector<Vec3> better{Vec3(0.45, 0.5, 0.55)};
  EXPECT_EQ(tree.insertPoints(better, &st), 1u);
  EXPECT_EQ(st.replaced, 1u);
  EXPECT_EQ(tree.size(), 1u);
  EXPECT_EQ(tree.points().front(), better.front());
  const std::vector<Vec3> worse{Vec3(0.9, 0.9, 0.9)};
  EXPECT_EQ(tree.insertPoints(worse), 0u);
  EXPECT_EQ(tree.knn(Vec3::Zero(), 1).neighbors[0].point, better.front());
}

TEST(KdTree, NonFiniteSkippedAndCounted) {
  IncrementalKdTree tree;
  const std::vector<Vec3> pts{Vec3(1, 1, 1), Vec3(std::numeric_limits<double>::quiet_NaN(), 0, 0),
                              Vec3(0, std::numeric_limits<double>::infinity(), 0)};
  InsertStats st;
  EXPECT_EQ(tree.insertPoints(pts, &st), 1u);
  EXPECT_EQ(st.non_finite, 2u);
}

TEST(KdTree, CountBoundedByCells) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 100000; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  IncrementalKdTree tree;
  tree.insertPoints(pts);
  EXPECT_GE(tree.size(), 1u);
  EXPECT_LE(tree.size(), 1000000u);
  // Brute-force grid oracle: distinct occupied cells.
  DownsampleModel model(0.1);
  for (const Vec3& p : pts) model.insert(p);
  EXPECT_EQ(tree.size(), model.points().size());
}

TEST(KdTree, MatchesBruteForceWithInterleavedInserts) {
  std::mt19937_64 rng(3);
  KdTreeConfig cfg;
  cfg.downsample_resolution = 0.2;
  IncrementalKdTree tree(cfg);
  DownsampleModel model(cfg.downsample_resolution);
  std::normal_distribution<double> cluster(0.0, 0.5);
  for (int round = 0; round < 20; ++round) {
    std::vector<Vec3> batch;
    for (int i = 0; i < 500; ++i) {
      // Mix of uniform and clustered points so cells get replaced.
      batch.push_back(i % 2 ? randomVec(rng, 4.0) : Vec3(cluster(rng), cluster(rng), cluster(rng)));
    }
    for (const Vec3& p : batch) model.insert(p);
    tree.insertPoints(batch);
    const std::vector<Vec3> ref = model.points();
    ASSERT_EQ(sorted(tree.points()), sorted(ref)) << round;
    for (int q = 0; q < 50; ++q) {
      const Vec3 query = randomVec(rng, 5.0);
      const int k = 1 + q % 7;
      const KnnResult r = tree.knn(query, k);
      ASSERT_TRUE(sameNeighbors(r.neighbors, bruteForceKnn(ref, query, k))) << round << " " << q;
    }
  }
}

TEST(KdTree, ExactWithoutDownsampling) {
  std::mt19937_64 rng(4);
  KdTreeConfig cfg;
  cfg.downsample_resolution = 0.0;
  IncrementalKdTree tree(cfg);
  std::vector<Vec3> all;
  for (int round = 0; round < 10; ++round) {
    std::vector<Vec3> batch;
    for (int i = 0; i < 1000; ++i) batch.push_back(randomVec(rng, 10.0));
    tree.insertPoints(batch);
    all.insert(all.end(), batch.begin(), batch.end());
    for (int q = 0; q < 100; ++q) {
      const Vec3 query = randomVec(rng, 12.0);
      ASSERT_TRUE(sameNeighbors(tree.knn(query, 5).neighbors, bruteForceKnn(all, query, 5)));
    }
  }
  EXPECT_EQ(tree.size(), all.size());
}

TEST(KdTree, TiesBrokenByCoordinates) {
  KdTreeConfig cfg;
  cfg.downsample_resolution = 0.0;
  IncrementalKdTree tree(cfg);
  const std::vector<Vec3> pts{Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, -1, 0), Vec3(0, 0, 1)};
  tree.insertPoints(pts);
  const KnnResult r = tree.knn(Vec3::Zero(), 3);
  ASSERT_EQ(r.neighbors.size(), 3u);
  EXPECT_EQ(r.neighbors[0].point, Vec3(-1, 0, 0));
  EXPECT_EQ(r.neighbors[1].point, Vec3(0, -1, 0));
  EXPECT_EQ(r.neighbors[2].point, Vec3(0, 0, 1));
}

TEST(KdTree, SortedInsertStaysShallow) {
  // Monotone inserts degenerate a plain k-d tree into a list; rebuilds keep
  // the height logarithmic.
  KdTreeConfig cfg;
  cfg.downsample_resolution = 0.0;
  IncrementalKdTree tree(cfg);
  std::vector<Vec3> pts;
  for (int i = 0; i < 20000; ++i) pts.emplace_back(0.01 * i, 0.0, 0.0);
  tree.insertPoints(pts);
  EXPECT_LE(tree.depth(), 4 * static_cast<int>(std::ceil(std::log2(20000.0))));
}

TEST(KdTree, DownsamplingIsOrderInsensitiveAcrossCells) {
  std::mt19937_64 rng(5);
  std::vector<Vec3> pts;
  // One point per distinct cell.
  for (int i = 0; i < 300; ++i) pts.emplace_back(0.1 * (i % 10) + 0.05, 0.1 * ((i / 10) % 10) + 0.05, 0.1 * (i / 100) + 0.05);
  std::vector<Vec3> shuffled = pts;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  IncrementalKdTree a, b;
  a.insertPoints(pts);
  b.insertPoints(shuffled);
  EXPECT_EQ(sorted(a.points()), sorted(b.points()));
}

TEST(KdTree, BoxSearchMatchesBruteForce) {
  std::mt19937_64 rng(6);
  std::vector<Vec3> pts;
  for (int i = 0; i < 3000; ++i) pts.push_back(randomVec(rng, 3.0));
  IncrementalKdTree tree;
  tree.insertPoints(pts);
  const std::vector<Vec3> live = tree.points();
  const Vec3 lo(-1, -0.5, 0), hi(1.5, 2, 2);
  std::vector<Vec3> ref;
  for (const Vec3& p : live) {
    if ((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all()) ref.push_back(p);
  }
  EXPECT_EQ(sorted(tree.boxSearch(lo, hi)), sorted(ref));
}

TEST(KdTree, WriteText) {
  IncrementalKdTree tree;
  const std::vector<Vec3> pts{Vec3(1, 2, 3), Vec3(-4, 5.5, 6)};
  tree.insertPoints(pts);
  std::ostringstream os;
  tree.writeText(os);
  std::istringstream is(os.str());
  std::vector<Vec3> read;
  double x, y, z;
  while (is >> x >> y >> z) read.emplace_back(x, y, z);
  EXPECT_EQ(sorted(read), sorted(pts));
}

TEST(FitPlane, ExactPlane) {
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0), Vec3(-1, 1, 0), Vec3(0.5, -1, 0)};
  const auto plane = fitPlane(pts);
  ASSERT_TRUE(plane);
  EXPECT_LT((plane->normal - Vec3::UnitZ()).norm(), 1e-12);
  EXPECT_LT((plane->centroid - Vec3(0.1, 0.4, 0.0)).norm(), 1e-12);
  EXPECT_LT(plane->max_point_dist, 1e-12);
}

TEST(FitPlane, CollinearRejected) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 5; ++i) pts.push_back(Vec3(1, 2, 3) + i * Vec3(0.3, -0.1, 0.2));
  EXPECT_FALSE(fitPlane(pts));
  const std::vector<Vec3> same(5, Vec3(1, 1, 1));
  EXPECT_FALSE(fitPlane(same));
}

TEST(FitPlane, WrongCountThrows) {
  const std::vector<Vec3> four(4, Vec3::Zero());
  EXPECT_THROW(fitPlane(four), std::invalid_argument);
}

TEST(FitPlane, OutlierRejectedByThreshold) {
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(0.5, 0.5, 0.5)};
  EXPECT_FALSE(fitPlane(pts, 0.1));
  EXPECT_TRUE(fitPlane(pts, 1.0));
}

TEST(FitPlane, NoisyPlaneNormalWithinHalfDegree) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 1e-3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 200; ++trial) {
    Vec3 n = randomVec(rng).normalized();
    const Vec3 a = n.unitOrthogonal();
    const Vec3 b = n.cross(a);
    const Vec3 c = randomVec(rng, 5.0);
    std::vector<Vec3> pts;
    // Corners of a 1 m square plus its center, jittered in-plane.
    const double layout[5][2] = {{-0.5, -0.5}, {0.5, -0.5}, {-0.5, 0.5}, {0.5, 0.5}, {0.0, 0.0}};
    for (const auto& l : layout) {
      pts.push_back(c + (l[0] + 0.1 * u(rng)) * a + (l[1] + 0.1 * u(rng)) * b + noise(rng) * n);
    }
    const auto plane = fitPlane(pts);
    ASSERT_TRUE(plane);
    const double angle = std::acos(std::min(1.0, std::abs(plane->normal.dot(n))));
    EXPECT_LT(angle, 0.5 * M_PI / 180.0) << trial;
    EXPECT_NEAR(plane->normal.norm(), 1.0, 1e-12);
    // Canonical sign: first nonzero component positive.
    const int first = std::abs(plane->normal.x()) > 1e-12 ? 0 : (std::abs(plane->normal.y()) > 1e-12 ? 1 : 2);
    EXPECT_GT(plane->normal[first], 0.0);
  }
}
