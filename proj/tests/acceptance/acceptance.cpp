// Acceptance suite: one PASS/FAIL line per criterion. Usage: acceptance <work_dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include "livo/esikf.hpp"
#include "livo/lidar_map.hpp"
#include "livo/lidar_measurement.hpp"
#include "livo/manifold.hpp"
#include "livo/simulator.hpp"
#include "livo/state.hpp"
#include "livo/visual_measurement.hpp"
#include "livo_cli/commands.hpp"
#include "oracles.hpp"
#include "test_support.hpp"
#include "wall_fixture.hpp"

using namespace livo;
namespace fs = std::filesystem;
using livo::testing::maxRelativeError;
using livo::testing::randomRotationVector;
using livo::testing::randomState;
using livo::testing::randomVec;

namespace {

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o, double seconds, double limit) {
  const bool pass = o.ok && seconds < limit;
  if (!pass) ++failures;
  std::printf("%s criterion %d (%s): %s; time %.2f s (limit %.0f s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              o.detail.c_str(), seconds, limit);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

// 1 ------------------------------------------------------------------------

Outcome manifoldRoundTrips() {
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const State x = randomState(rng);
    StateVector d = StateVector::Random();
    d.head<3>() = randomRotationVector(rng, M_PI - 1e-6);
    worst = std::max(worst, (boxminus(boxplus(x, d), x) - d).cwiseAbs().maxCoeff());

    const Vec3 r = randomRotationVector(rng, M_PI - 1e-6);
    worst = std::max(worst, (so3::log(so3::exp(r)) - r).cwiseAbs().maxCoeff());
    const Mat3 R = so3::exp(randomRotationVector(rng, M_PI));
    worst = std::max(worst, (so3::exp(so3::log(R)) - R).cwiseAbs().maxCoeff());
  }
  return {worst < 1e-9, fmt("max round-trip error %.3g over 1e4 samples (tol 1e-9)", worst)};
}

// 2 ------------------------------------------------------------------------

ImuSample randomInput(std::mt19937_64& rng) {
  ImuSample u;
  u.gyro = randomVec(rng, 1.0);
  u.accel = Vec3(0.0, 0.0, 9.81) + randomVec(rng, 2.0);
  return u;
}

double propagationAudit() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const State x = randomState(rng);
    const ImuSample u = randomInput(rng);
    const double dt = 0.005 + 0.02 * std::uniform_real_distribution<double>(0, 1)(rng);
    const State ref = propagateState(x, u, dt);
    const auto J = propagationJacobians(x, u, dt);
    Covariance num_x;
    for (int c = 0; c < kStateDim; ++c) {
      const StateVector e = 1e-6 * StateVector::Unit(c);
      num_x.col(c) = (boxminus(propagateState(boxplus(x, e), u, dt), ref) -
                      boxminus(propagateState(boxplus(x, -e), u, dt), ref)) / 2e-6;
    }
    ProcessJacobian num_w;
    for (int c = 0; c < kNoiseDim; ++c) {
      const NoiseVector e = 1e-4 * NoiseVector::Unit(c);
      num_w.col(c) = (boxminus(propagateWithNoise(x, u, e, dt), ref) - boxminus(propagateWithNoise(x, u, -e, dt), ref)) /
                     2e-4;
    }
    worst = std::max({worst, maxRelativeError(J.F_x, num_x), maxRelativeError(J.F_w, num_w)});
  }
  return worst;
}

double pointToPlaneAudit() {
  std::mt19937_64 rng(3);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const State x = randomState(rng);
    const RigidTransform T_IL{livo::testing::randomRotation(rng), randomVec(rng, 0.3)};
    Plane pl;
    pl.normal = randomVec(rng).normalized();
    pl.centroid = randomVec(rng, 5.0);
    const Vec3 p_L = randomVec(rng, 10.0);
    StateRow num;
    for (int c = 0; c < kStateDim; ++c) {
      const StateVector e = 1e-6 * StateVector::Unit(c);
      num[c] = (pointToPlaneResidual(boxplus(x, e), T_IL, p_L, pl) - pointToPlaneResidual(boxplus(x, -e), T_IL, p_L, pl)) /
               2e-6;
    }
    worst = std::max(worst, maxRelativeError(pointToPlaneJacobian(x, T_IL, p_L, pl), num));
  }
  return worst;
}

// Bilinear interpolation has kinks on pixel boundaries; entries whose
// difference step crosses one are not differentiable and are skipped.
double photometricAudit() {
  const livo::testing::WallFixture f(livo::testing::smoothNoise(4));
  const ImagePyramid pyr = f.pyramidAt(f.truth);
  const PinholeCamera cam0(f.sensors.camera);
  VisualMap map;
  for (const Vec3& p : f.latticePoints(f.truth, 0.6, 30.0)) {
    MapPoint mp;
    mp.position = p;
    PatchRecord rec;
    rec.camera_pose = f.cameraPose(f.truth);
    rec.pixel = cam0.project(rec.camera_pose.inverse() * p);
    rec.view_dir = (rec.camera_pose.trans - p).normalized();
    rec.pyramid = *extractPatchPyramid(pyr, rec.pixel);
    mp.patches.push_back(rec);
    map.addPoint(mp);
  }
  std::vector<std::uint64_t> ids;
  for (const auto& mp : map.points()) ids.push_back(mp.id);
  const auto corr = prepareCorrespondences(f.truth, f.sensors, map, ids);

  std::mt19937_64 rng(5);
  StateVector d = StateVector::Zero();
  d.segment<3>(idx::kRot) = randomRotationVector(rng, 0.01);
  d.segment<3>(idx::kPos) = randomVec(rng, 0.02);
  const State x = boxplus(f.truth, d);

  double worst = 0.0;
  for (int l = 0; l < kPyramidLevels; ++l) {
    const PinholeCamera cam = cam0.atLevel(l);
    const auto cells = [&](const State& s, const VisualCorrespondence& c) {
      const Vec2 center = cam.projectUnchecked(cameraPose(s, f.sensors).inverse() * c.position);
      Eigen::Matrix<double, kPatchArea, 2> out;
      for (int r = 0; r < kPatchSize; ++r) {
        for (int q = 0; q < kPatchSize; ++q) {
          out.row(r * kPatchSize + q) = (center + c.warp * Vec2(patchOffset(q), patchOffset(r))).array().floor().transpose();
        }
      }
      return out;
    };
    for (const auto& c : corr) {
      const auto term = photometricResidual(x, f.sensors, c, pyr, l);
      if (!term) return INFINITY;
      Eigen::Matrix<double, kPatchArea, 6> num, ana;
      for (int k = 0; k < 6; ++k) {
        const double h = k < 3 ? 1e-6 : 1e-5;
        StateVector e = StateVector::Zero();
        e[k < 3 ? idx::kRot + k : idx::kPos + k - 3] = h;
        const State xp = boxplus(x, e);
        const State xm = boxplus(x, -e);
        const auto tp = photometricResidual(xp, f.sensors, c, pyr, l);
        const auto tm = photometricResidual(xm, f.sensors, c, pyr, l);
        if (!tp || !tm) return INFINITY;
        num.col(k) = (tp->residuals - tm->residuals) / (2.0 * h);
        ana.col(k) = term->jacobian.col(k < 3 ? idx::kRot + k : idx::kPos + k - 3);
        const auto cp = cells(xp, c);
        const auto cm = cells(xm, c);
        for (int i = 0; i < kPatchArea; ++i) {
          if (cp.row(i) != cm.row(i)) num(i, k) = ana(i, k);
        }
      }
      worst = std::max(worst, maxRelativeError(ana, num));
    }
  }
  return worst;
}

Outcome jacobianAudits() {
  const double prop = propagationAudit();
  const double plane = pointToPlaneAudit();
  const double photo = photometricAudit();
  return {prop < 1e-4 && plane < 1e-4 && photo < 1e-3,
          fmt("max rel err propagation %.3g, point-to-plane %.3g (tol 1e-4), photometric %.3g (tol 1e-3)", prop, plane,
              photo)};
}

// 3 ------------------------------------------------------------------------

Outcome kdTreeExactness() {
  std::mt19937_64 rng(3);
  KdTreeConfig cfg;
  cfg.downsample_resolution = 0.2;
  IncrementalKdTree tree(cfg);
  livo::testing::DownsampleModel model(cfg.downsample_resolution);
  std::normal_distribution<double> cluster(0.0, 0.5);
  std::size_t queries = 0, mismatches = 0, inserted = 0;
  bool same_points = true;
  for (int round = 0; round < 20; ++round) {
    std::vector<Vec3> batch;
    for (int i = 0; i < 500; ++i) batch.push_back(i % 2 ? randomVec(rng, 4.0) : Vec3(cluster(rng), cluster(rng), cluster(rng)));
    for (const Vec3& p : batch) model.insert(p);
    tree.insertPoints(batch);
    inserted += batch.size();
    const auto ref = model.points();
    same_points = same_points && tree.size() == ref.size();
    for (int q = 0; q < 50; ++q) {
      const Vec3 query = randomVec(rng, 5.0);
      const auto got = tree.knn(query, 5).neighbors;
      const auto want = livo::testing::bruteForceKnn(ref, query, 5);
      bool equal = got.size() == want.size();
      for (std::size_t i = 0; equal && i < got.size(); ++i) {
        equal = got[i].point == want[i].point && got[i].sq_dist == want[i].sq_dist;
      }
      ++queries;
      if (!equal) ++mismatches;
    }
  }
  return {mismatches == 0 && same_points && queries == 1000,
          fmt("%.0f inserts, %.0f queries (k=5), %.0f mismatches vs brute force", static_cast<double>(inserted),
              static_cast<double>(queries), static_cast<double>(mismatches))};
}

// 4 ------------------------------------------------------------------------

Outcome filterEquivalence() {
  double mean_err = 0.0, cov_err = 0.0;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto lp = livo::testing::makeLinearProblem(seed, 8 + static_cast<int>(seed));
    const auto oracle = livo::testing::closedFormKalman(lp);
    const auto r = iteratedUpdate(lp.prior, livo::testing::linearProvider(lp), {});
    ok = ok && r.status == UpdateStatus::kOk;
    mean_err = std::max(mean_err, (livo::testing::euclidean(r.state) - oracle.mean).tail<15>().cwiseAbs().maxCoeff());
    cov_err = std::max(cov_err, (r.cov - oracle.cov).cwiseAbs().maxCoeff());
  }
  const auto rp = livo::testing::makeRangeProblem();
  const double step = 1e-3;
  const Eigen::Vector2d grid = livo::testing::gridMap(rp, step);
  IteratedUpdateConfig cfg;
  cfg.max_iterations = 20;
  cfg.eps_pos = 1e-8;
  const auto r = iteratedUpdate(rp.prior, livo::testing::rangeProvider(rp), cfg);
  const double map_err = (r.state.pos_GI.head<2>() - grid).cwiseAbs().maxCoeff();
  ok = ok && mean_err < 1e-9 && cov_err < 1e-9 && map_err <= step;
  return {ok, fmt("linear KF max |dx| %.3g, max |dP| %.3g (tol 1e-9); nonlinear vs grid MAP %.3g (grid %.0e)", mean_err,
                  cov_err, map_err, step)};
}

// 5 ------------------------------------------------------------------------

Outcome outlierRejection() {
  const auto st = livo::testing::occlusionExperiment(1.0, 13.0, 2.0);
  const double false_rate =
      st.visible_total ? static_cast<double>(st.visible_rejected) / static_cast<double>(st.visible_total) : 1.0;
  const bool ok = st.occluded_total > 0 && st.occluded_rejected == st.occluded_total && false_rate < 0.02;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%zu frames; occluded rejected %zu/%zu; visible falsely rejected %zu/%zu = %.2f%% (limit 2%%), %zu in "
                "boundary band",
                st.frames, st.occluded_rejected, st.occluded_total, st.visible_rejected, st.visible_total,
                100.0 * false_rate, st.band_points);
  return {ok, buf};
}

// 6, 7, 9 ------------------------------------------------------------------

struct RunOutcome {
  double ate = INFINITY;
  double seconds = 0.0;
  fs::path trajectory;
  std::string error;
};

fs::path simulate(const fs::path& work, const std::string& scene) {
  const fs::path dir = work / ("data_" + scene);
  fs::remove_all(dir);
  const auto t0 = Clock::now();
  cli::cmdSim({scene, 7, dir});
  std::printf("  simulated %s in %.1f s\n", scene.c_str(), secondsSince(t0));
  return dir;
}

RunOutcome runAndEvaluate(const fs::path& data, const fs::path& out, Mode mode) {
  RunOutcome r;
  try {
    cli::RunOptions opt;
    opt.dataset = data;
    opt.mode = mode;
    opt.out = out;
    const auto t0 = Clock::now();
    const auto summary = cli::cmdRun(opt);
    r.seconds = secondsSince(t0);
    r.trajectory = summary.trajectory;
    cli::EvalOptions eval;
    eval.trajectory = summary.trajectory;
    eval.groundtruth = data / "groundtruth.txt";
    r.ate = cli::cmdEval(eval).rmse;
    std::printf("  %s on %s: ATE %.4f m, %.1f s\n", modeName(mode), data.filename().c_str(), r.ate, r.seconds);
  } catch (const std::exception& e) {
    r.error = e.what();
    std::printf("  %s on %s failed: %s\n", modeName(mode), data.filename().c_str(), e.what());
  }
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// 8 ------------------------------------------------------------------------

Outcome undistortion() {
  double worst = 0.0, raw = 0.0;
  std::size_t points = 0;
  for (double t : {3.0, 8.0, 14.0, 20.0}) {
    const auto rt = livo::testing::undistortionRoundTrip("box_room", t);
    worst = std::max(worst, rt.rms);
    raw = std::max(raw, rt.raw_rms);
    points += rt.points;
  }
  return {worst < 2e-3 && points > 0,
          fmt("max RMS %.3g mm over %.0f points (limit 2 mm); uncompensated %.1f mm", 1e3 * worst,
              static_cast<double>(points), 1e3 * raw)};
}

template <typename Fn>
void timed(int id, const std::string& name, double limit, Fn&& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(id, name, o, secondsSince(t0), limit);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "livo_acceptance";
  fs::create_directories(work);

  timed(1, "manifold round trips", 1.0, manifoldRoundTrips);
  timed(2, "jacobian audits", 10.0, jacobianAudits);
  timed(3, "k-d tree exactness", 5.0, kdTreeExactness);
  timed(4, "filter equivalence", 5.0, filterEquivalence);
  timed(5, "outlier rejection", 10.0, outlierRejection);

  // End-to-end: the time limit applies to each odometry run.
  const fs::path room = simulate(work, "box_room");
  const RunOutcome livo_room = runAndEvaluate(room, work / "box_room_livo", Mode::kLivo);
  {
    sim::Scene scene = sim::makeScene("box_room");
    const double path = scene.trajectory.distance(scene.trajectory.duration);
    report(6, "box_room accuracy",
           {livo_room.error.empty() && livo_room.ate < 0.05,
            livo_room.error.empty() ? fmt("LIVO ATE RMSE %.4f m (limit 0.05 m), path %.1f m", livo_room.ate, path)
                                    : livo_room.error},
           livo_room.seconds, 120.0);
  }

  {
    const fs::path wall = simulate(work, "single_wall");
    const RunOutcome lio = runAndEvaluate(wall, work / "single_wall_lio", Mode::kLio);
    const RunOutcome livo = runAndEvaluate(wall, work / "single_wall_livo", Mode::kLivo);
    const fs::path flat = simulate(work, "textureless_wall");
    const RunOutcome flat_lio = runAndEvaluate(flat, work / "textureless_wall_lio", Mode::kLio);
    const RunOutcome flat_livo = runAndEvaluate(flat, work / "textureless_wall_livo", Mode::kLivo);
    const bool ran = lio.error.empty() && livo.error.empty() && flat_lio.error.empty() && flat_livo.error.empty();
    const bool ok = ran && livo.ate < lio.ate && flat_livo.ate <= 1.1 * flat_lio.ate;
    const double slowest = std::max({lio.seconds, livo.seconds, flat_lio.seconds, flat_livo.seconds});
    report(7, "degeneracy",
           {ok, fmt("single_wall LIVO %.4f vs LIO %.4f m; textureless_wall LIVO %.4f vs 1.1 x LIO %.4f m", livo.ate,
                    lio.ate, flat_livo.ate, 1.1 * flat_lio.ate)},
           slowest, 120.0);
  }

  timed(8, "undistortion round trip", 5.0, undistortion);

  {
    const RunOutcome again = runAndEvaluate(room, work / "box_room_livo_again", Mode::kLivo);
    const bool ok = livo_room.error.empty() && again.error.empty() && !slurp(livo_room.trajectory).empty() &&
                    slurp(livo_room.trajectory) == slurp(again.trajectory);
    report(9, "determinism",
           {ok, ok ? "trajectory.txt byte-identical across two runs" : "trajectory files differ or missing"},
           again.seconds, 120.0);
  }

  std::printf("%s: %d criterion(s) failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
