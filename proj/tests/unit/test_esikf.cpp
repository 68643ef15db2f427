#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "livo/esikf.hpp"
#include "livo/simulator.hpp"
#include "oracles.hpp"
#include "test_support.hpp"
#include "wall_fixture.hpp"

using namespace livo;
using livo::testing::WallFixture;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

State perturbed(const State& x, const Vec3& drot, const Vec3& dpos) {
  StateVector d = StateVector::Zero();
  d.segment<3>(idx::kRot) = drot;
  d.segment<3>(idx::kPos) = dpos;
  return boxplus(x, d);
}

double rotError(const State& a, const State& b) { return so3::log(a.rot_GI.transpose() * b.rot_GI).norm(); }

Covariance poseCovariance(double sigma_rot, double sigma_pos) {
  Covariance P = 1e-6 * Covariance::Identity();
  P.diagonal().segment<3>(idx::kRot).setConstant(sigma_rot * sigma_rot);
  P.diagonal().segment<3>(idx::kPos).setConstant(sigma_pos * sigma_pos);
  return P;
}

State truthState(const sim::TrajectorySample& s) {
  State x;
  x.rot_GI = s.rot;
  x.pos_GI = s.pos;
  x.vel_G = s.vel;
  return x;
}

struct LidarScene {
  sim::Scene scene;
  IncrementalKdTree map;

  LidarScene(const std::string& name, std::initializer_list<double> map_times) : scene(sim::makeScene(name)) {
    scene.lidar.period = 0.0;
    scene.lidar.range_noise = 0.0;
    std::mt19937_64 rng(1);
    for (double t : map_times) {
      const LidarScan s = sim::simulateLidar(scene.trajectory, scene.world, t, scene.lidar, scene.sensors.T_IL, rng);
      const RigidTransform T_GL = scene.trajectory.evaluate(t).pose() * scene.sensors.T_IL;
      std::vector<Vec3> pts;
      for (const auto& p : s.points) pts.push_back(T_GL * p.position);
      map.insertPoints(pts);
    }
  }

  std::vector<LidarPoint> scanAt(double t) const {
    std::mt19937_64 rng(2);
    return sim::simulateLidar(scene.trajectory, scene.world, t, scene.lidar, scene.sensors.T_IL, rng).points;
  }
};

LinearSystem accumulate(const std::vector<PhotoResidualTerm>& terms) {
  LinearSystem sys;
  for (const auto& t : terms) {
    for (int i = 0; i < kPatchArea; ++i) sys.add(t.jacobian.row(i), t.residuals[i], t.weight);
  }
  return sys;
}

VisualMap wallMap(const WallFixture& f, double spacing) {
  const ImagePyramid pyr = f.pyramidAt(f.truth);
  const PinholeCamera cam(f.sensors.camera);
  const RigidTransform T_GC = f.cameraPose(f.truth);
  VisualMap map;
  for (const Vec3& p : f.latticePoints(f.truth, spacing, 20.0)) {
    PatchRecord rec;
    rec.camera_pose = T_GC;
    rec.pixel = cam.project(T_GC.inverse() * p);
    rec.view_dir = (T_GC.trans - p).normalized();
    const auto patch = extractPatchPyramid(pyr, rec.pixel);
    if (!patch) continue;
    rec.pyramid = *patch;
    MapPoint mp;
    mp.position = p;
    mp.patches.push_back(rec);
    map.addPoint(mp);
  }
  return map;
}

std::vector<std::uint64_t> allIds(const VisualMap& map) {
  std::vector<std::uint64_t> ids;
  for (const auto& mp : map.points()) ids.push_back(mp.id);
  return ids;
}

}  // namespace

TEST(LinearSystem, AccumulatesNormalEquations) {
  LinearSystem sys;
  StateRow J = StateRow::Zero();
  J[3] = 2.0;
  sys.add(J, 0.5, 4.0);
  EXPECT_DOUBLE_EQ(sys.hessian(3, 3), 16.0);
  EXPECT_DOUBLE_EQ(sys.gradient[3], 4.0);
  EXPECT_DOUBLE_EQ(sys.cost, 1.0);
  EXPECT_EQ(sys.terms, 1u);
}

TEST(IteratedUpdate, NoMeasurementsReturnsPrior) {
  Prior prior{State{}, defaultInitialCovariance()};
  prior.state.pos_GI = Vec3(1, 2, 3);
  const auto r = iteratedUpdate(prior, [](const State&) { return LinearSystem{}; }, {});
  EXPECT_EQ(r.status, UpdateStatus::kNoMeasurements);
  EXPECT_EQ(r.state.pos_GI, prior.state.pos_GI);
  EXPECT_EQ(r.cov, prior.cov);
}

TEST(IteratedUpdate, EqualsClosedFormKalmanOnLinearProblem) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto lp = livo::testing::makeLinearProblem(seed, 8 + static_cast<int>(seed));
    const auto oracle = livo::testing::closedFormKalman(lp);
    const auto r = iteratedUpdate(lp.prior, livo::testing::linearProvider(lp), {});
    ASSERT_EQ(r.status, UpdateStatus::kOk);
    EXPECT_LT((livo::testing::euclidean(r.state) - oracle.mean).tail<15>().cwiseAbs().maxCoeff(), 1e-9) << seed;
    EXPECT_LT(rotError(r.state, lp.prior.state), 1e-12);
    EXPECT_LT((r.cov - oracle.cov).cwiseAbs().maxCoeff(), 1e-9) << seed;
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.iterations, 2);
  }
}

TEST(IteratedUpdate, RangeOnlyMatchesGridMap) {
  const auto rp = livo::testing::makeRangeProblem();
  const double step = 1e-3;
  const Eigen::Vector2d map = livo::testing::gridMap(rp, step);
  IteratedUpdateConfig cfg;
  cfg.max_iterations = 20;
  cfg.eps_pos = 1e-8;
  const auto r = iteratedUpdate(rp.prior, livo::testing::rangeProvider(rp), cfg);
  ASSERT_EQ(r.status, UpdateStatus::kOk);
  EXPECT_TRUE(r.converged);
  EXPECT_LE((r.state.pos_GI.head<2>() - map).cwiseAbs().maxCoeff(), step);
  // The estimate moved well away from the prior mean.
  EXPECT_GT((r.state.pos_GI.head<2>() - rp.prior.state.pos_GI.head<2>()).norm(), 0.2);
  for (std::size_t i = 1; i < r.cost_history.size(); ++i) EXPECT_LE(r.cost_history[i], r.cost_history[i - 1] + 1e-12);
}

TEST(IteratedUpdate, ConfidentPriorBarelyMoves) {
  auto lp = livo::testing::makeLinearProblem(3, 12);
  lp.prior.cov = 1e-12 * Covariance::Identity();
  const auto r = iteratedUpdate(lp.prior, livo::testing::linearProvider(lp), {});
  EXPECT_LT((livo::testing::euclidean(r.state) - livo::testing::euclidean(lp.prior.state)).norm(), 1e-6);
  EXPECT_LT((r.cov - lp.prior.cov).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(IteratedUpdate, PosteriorCovarianceIsSymmetricAndShrinks) {
  const auto lp = livo::testing::makeLinearProblem(4, 30);
  const auto r = iteratedUpdate(lp.prior, livo::testing::linearProvider(lp), {});
  EXPECT_LT((r.cov - r.cov.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(r.cov.trace(), lp.prior.cov.trace());
}

TEST(LidarUpdate, BoxRoomConvergesFromPerturbation) {
  const LidarScene s("box_room", {5.0});
  const double t = 5.3;
  const State truth = truthState(s.scene.trajectory.evaluate(t));
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const Vec3 drot = livo::testing::randomVec(rng).normalized() * 2.0 * kDeg;
    const Vec3 dpos = livo::testing::randomVec(rng).normalized() * 0.05;
    const Prior prior{perturbed(truth, drot, dpos), poseCovariance(0.05, 0.1)};
    const auto r = lidarUpdate(prior, s.scanAt(t), s.map, s.scene.sensors.T_IL);
    ASSERT_EQ(r.status, UpdateStatus::kOk);
    EXPECT_FALSE(r.degenerate);
    EXPECT_LE(r.iterations, 5);
    EXPECT_LT((r.state.pos_GI - truth.pos_GI).norm(), 5e-3) << trial;
    EXPECT_LT(rotError(r.state, truth), 0.1 * kDeg) << trial;
  }
}

TEST(LidarUpdate, EmptyMapKeepsPrior) {
  const LidarScene s("box_room", {});
  const State truth = truthState(s.scene.trajectory.evaluate(5.0));
  const Prior prior{truth, poseCovariance(0.05, 0.1)};
  const auto r = lidarUpdate(prior, s.scanAt(5.0), s.map, s.scene.sensors.T_IL);
  EXPECT_EQ(r.status, UpdateStatus::kNoMeasurements);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.state.pos_GI, truth.pos_GI);
}

TEST(LidarUpdate, SingleWallLeavesAlongWallDirectionUnobserved) {
  const LidarScene s("single_wall", {8.0});
  const double t = 8.2;
  const State truth = truthState(s.scene.trajectory.evaluate(t));
  // x runs along the wall, y is the wall normal.
  const Prior prior{perturbed(truth, Vec3::Zero(), Vec3(0.08, 0.05, 0.0)),
                    poseCovariance(0.05, 0.1)};
  ASSERT_NEAR((prior.state.pos_GI - truth.pos_GI).x(), 0.08, 1e-12);
  const auto r = lidarUpdate(prior, s.scanAt(t), s.map, s.scene.sensors.T_IL);
  // Correspondences are re-searched per iterate, so the cost is rough along
  // the unobserved axis and the iteration may stop on step halving.
  ASSERT_TRUE(r.status == UpdateStatus::kOk || r.status == UpdateStatus::kCostIncrease);
  ASSERT_GE(r.iterations, 1);
  const Vec3 err = r.state.pos_GI - truth.pos_GI;
  EXPECT_LT(std::abs(err.y()), 5e-3);
  EXPECT_GT(std::abs(err.x()), 0.07);
  // Posterior uncertainty stays large along the wall and small across it.
  const Mat3 Ppos = r.cov.block<3, 3>(idx::kPos, idx::kPos);
  EXPECT_GT(Ppos(0, 0), 100.0 * Ppos(1, 1));
}

TEST(VisualUpdate, TexturedWallConvergesFromPerturbation) {
  const WallFixture f(livo::testing::smoothNoise(11));
  const VisualMap map = wallMap(f, 0.25);
  const ImagePyramid pyr = f.pyramidAt(f.truth);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 4; ++trial) {
    const Vec3 drot = livo::testing::randomVec(rng).normalized() * 1.0 * kDeg;
    const Vec3 dpos = livo::testing::randomVec(rng).normalized() * 0.03;
    const Prior prior{perturbed(f.truth, drot, dpos), poseCovariance(0.02, 0.05)};
    const auto corr = prepareCorrespondences(prior.state, f.sensors, map, allIds(map));
    ASSERT_GT(corr.size(), 100u);
    const auto r = visualUpdate(prior, pyr, corr, f.sensors);
    ASSERT_EQ(r.status, UpdateStatus::kOk);
    EXPECT_LT((r.state.pos_GI - f.truth.pos_GI).norm(), 5e-3) << trial;
    EXPECT_LT(rotError(r.state, f.truth), 0.1 * kDeg) << trial;
  }
}

TEST(VisualUpdate, TexturelessWallReturnsPrior) {
  const WallFixture f(livo::testing::flat());
  const VisualMap map = wallMap(f, 0.5);
  const ImagePyramid pyr = f.pyramidAt(f.truth);
  const Prior prior{perturbed(f.truth, Vec3(0.01, 0.0, -0.01), Vec3(0.02, 0.01, 0.0)), poseCovariance(0.02, 0.05)};
  const auto corr = prepareCorrespondences(prior.state, f.sensors, map, allIds(map));
  ASSERT_FALSE(corr.empty());
  const auto r = visualUpdate(prior, pyr, corr, f.sensors);
  EXPECT_LT((r.state.pos_GI - prior.state.pos_GI).norm(), 1e-9);
  EXPECT_LT(rotError(r.state, prior.state), 1e-9);
  EXPECT_LT((r.cov - prior.cov).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(VisualUpdate, NoCorrespondencesReturnsPrior) {
  const WallFixture f(livo::testing::smoothNoise(12));
  const Prior prior{f.truth, poseCovariance(0.02, 0.05)};
  const auto r = visualUpdate(prior, f.pyramidAt(f.truth), {}, f.sensors);
  EXPECT_EQ(r.status, UpdateStatus::kNoMeasurements);
}

namespace {

// Largest lateral offset, in level-0 pixels, from which a single pyramid
// level recovers the pose to within one pixel. The wall is seen frontally
// from 3 m.
struct BasinSweep {
  WallFixture f;
  VisualMap map;
  ImagePyramid pyr;
  double px_per_m;

  explicit BasinSweep(const sim::Texture& tex)
      : f(tex), map(wallMap(f, 0.25)), pyr(f.pyramidAt(f.truth)), px_per_m(f.sensors.camera.fx / 3.0) {}

  int basin(int level) const {
    IteratedUpdateConfig cfg;
    cfg.max_iterations = 200;
    int last_ok = 0;
    for (int px = 2; px <= 120; px += 2) {
      // Attitude is pinned: on a frontal wall lateral shift and yaw are
      // nearly interchangeable.
      const Prior prior{perturbed(f.truth, Vec3::Zero(), Vec3(px / px_per_m, 0.0, 0.0)), poseCovariance(1e-4, 1.0)};
      const auto corr = prepareCorrespondences(prior.state, f.sensors, map, allIds(map));
      const ResidualProvider provider = [&](const State& x) {
        return accumulate(buildVisualTerms(x, f.sensors, corr, pyr, level));
      };
      const auto r = iteratedUpdate(prior, provider, cfg);
      if (r.status == UpdateStatus::kSingular || (r.state.pos_GI - f.truth.pos_GI).norm() * px_per_m > 1.0) break;
      last_ok = px;
    }
    return last_ok;
  }
};

}  // namespace

TEST(VisualUpdate, CoarseLevelHasWiderBasin) {
  // Simulator wall texture with one octave coarser than the scenes use.
  sim::Texture tex = sim::makeScene("single_wall").world.planes.front().texture;
  tex.cell *= 2.0;
  tex.octaves += 1;
  const BasinSweep sweep(tex);
  const int b0 = sweep.basin(0);
  const int b2 = sweep.basin(2);
  EXPECT_GT(b0, 0);
  EXPECT_GE(b2, 2 * b0) << "level 0 " << b0 << " px, level 2 " << b2 << " px";
}

TEST(VisualUpdate, CoarseLevelIsNotNarrowerOnSceneTexture) {
  // The basin cannot exceed the coarsest texture scale, so only ordering is
  // checked here.
  const BasinSweep sweep(sim::makeScene("single_wall").world.planes.front().texture);
  const int b0 = sweep.basin(0);
  const int b2 = sweep.basin(2);
  EXPECT_GT(b0, 0);
  EXPECT_GE(b2, b0) << "level 0 " << b0 << " px, level 2 " << b2 << " px";
}

TEST(PhotometricErrors, NanWhereUnavailable) {
  const WallFixture f(livo::testing::smoothNoise(14));
  const VisualMap map = wallMap(f, 0.5);
  const ImagePyramid pyr = f.pyramidAt(f.truth);
  const auto corr = prepareCorrespondences(f.truth, f.sensors, map, allIds(map));
  const auto e = photometricErrors(f.truth, f.sensors, pyr, corr);
  ASSERT_EQ(e.size(), corr.size());
  for (double v : e) EXPECT_LT(v, 1e-3);
  const State away = perturbed(f.truth, Vec3(0.0, 0.5 * std::numbers::pi, 0.0), Vec3::Zero());
  for (double v : photometricErrors(away, f.sensors, pyr, corr)) EXPECT_TRUE(std::isnan(v));
}
