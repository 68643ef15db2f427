#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "livo/lidar_map.hpp"
#include "livo/lidar_measurement.hpp"
#include "livo/simulator.hpp"
#include "livo/state.hpp"

using namespace livo;

namespace {

Vec3 uniform(std::mt19937_64& rng, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  return Vec3(u(rng), u(rng), u(rng));
}

sim::Scene stillRoom() {
  sim::Scene scene = sim::makeScene("box_room");
  scene.lidar.period = 0.0;
  scene.lidar.range_noise = 0.0;
  return scene;
}

State truthAt(const sim::Scene& scene, double t) {
  const auto s = scene.trajectory.evaluate(t);
  State x;
  x.rot_GI = s.rot;
  x.pos_GI = s.pos;
  x.vel_G = s.vel;
  return x;
}

}  // namespace

static void KdTree_InsertBatch(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::vector<Vec3> batch(static_cast<std::size_t>(state.range(0)));
  for (auto& p : batch) p = uniform(rng, 20.0);
  for (auto _ : state) {
    IncrementalKdTree tree;
    benchmark::DoNotOptimize(tree.insertPoints(batch));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(KdTree_InsertBatch)->Arg(1000)->Arg(10000)->Arg(100000);

static void KdTree_Knn5(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::vector<Vec3> pts(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pts) p = uniform(rng, 20.0);
  IncrementalKdTree tree;
  tree.insertPoints(pts);
  std::vector<Vec3> queries(1024);
  for (auto& q : queries) q = uniform(rng, 20.0);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(tree.knn(queries[i++ & 1023], 5));
}
BENCHMARK(KdTree_Knn5)->Arg(10000)->Arg(100000);

static void Imu_PropagateStep(benchmark::State& state) {
  State x;
  x.gravity_G = Vec3(0, 0, -9.81);
  Covariance P = defaultInitialCovariance();
  ImuSample u;
  u.gyro = Vec3(0.01, -0.02, 0.3);
  u.accel = Vec3(0.2, 0.1, 9.8);
  const NoiseConfig noise;
  const double dt = 0.005;
  for (auto _ : state) {
    const auto J = propagationJacobians(x, u, dt);
    P = propagateCovariance(P, J.F_x, J.F_w, discreteNoise(noise, dt));
    x = propagateState(x, u, dt);
    benchmark::DoNotOptimize(P);
  }
}
BENCHMARK(Imu_PropagateStep);

static void Lidar_ResidualTerms(benchmark::State& state) {
  const sim::Scene scene = stillRoom();
  std::mt19937_64 rng(3);
  const RigidTransform T_GL = scene.trajectory.evaluate(5.0).pose() * scene.sensors.T_IL;
  const LidarScan map_scan = sim::simulateLidar(scene.trajectory, scene.world, 5.0, scene.lidar, scene.sensors.T_IL, rng);
  std::vector<Vec3> world;
  for (const auto& p : map_scan.points) world.push_back(T_GL * p.position);
  IncrementalKdTree map;
  map.insertPoints(world);
  const LidarScan scan = sim::simulateLidar(scene.trajectory, scene.world, 5.1, scene.lidar, scene.sensors.T_IL, rng);
  std::vector<LidarPoint> strided;
  for (std::size_t i = 0; i < scan.points.size(); i += 4) strided.push_back(scan.points[i]);
  const State x = truthAt(scene, 5.1);
  for (auto _ : state) benchmark::DoNotOptimize(residualTermsForScan(x, scene.sensors.T_IL, strided, map));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(strided.size()));
}
BENCHMARK(Lidar_ResidualTerms)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
