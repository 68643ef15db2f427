#include "livo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "livo/errors.hpp"

namespace livo {

AteReport computeAte(const std::vector<StampedPose>& estimate, const std::vector<StampedPose>& groundtruth,
                     const AteOptions& options) {
  if (groundtruth.empty()) throw EvaluationError("computeAte: empty ground truth");
  struct Pair {
    const StampedPose* est;
    const StampedPose* gt;
  };
  std::vector<Pair> pairs;
  for (const auto& e : estimate) {
    auto it = std::lower_bound(groundtruth.begin(), groundtruth.end(), e.timestamp,
                               [](const StampedPose& p, double t) { return p.timestamp < t; });
    const StampedPose* best = nullptr;
    if (it != groundtruth.end()) best = &*it;
    if (it != groundtruth.begin()) {
      const StampedPose* prev = &*(it - 1);
      if (!best || std::abs(prev->timestamp - e.timestamp) <= std::abs(best->timestamp - e.timestamp)) best = prev;
    }
    if (best && std::abs(best->timestamp - e.timestamp) <= options.max_time_gap) pairs.push_back({&e, best});
  }
  if (pairs.size() < 2) throw EvaluationError("computeAte: fewer than two associated poses");

  RigidTransform align;
  if (options.align_first_pose) {
    const RigidTransform T_gt{pairs.front().gt->rot, pairs.front().gt->pos};
    const RigidTransform T_est{pairs.front().est->rot, pairs.front().est->pos};
    align = T_gt * T_est.inverse();
  }

  AteReport report;
  Vec3 sq = Vec3::Zero();
  for (const Pair& p : pairs) {
    const Vec3 err = align * p.est->pos - p.gt->pos;
    report.samples.push_back({p.est->timestamp, err});
    sq += err.cwiseProduct(err);
    report.max_error = std::max(report.max_error, err.norm());
  }
  const double n = static_cast<double>(pairs.size());
  report.rmse_axis = (sq / n).cwiseSqrt();
  report.rmse = std::sqrt(sq.sum() / n);
  return report;
}

void writeAteCsv(std::ostream& os, const AteReport& report) {
  os << "t,ex,ey,ez,norm\n";
  char buf[160];
  for (const auto& s : report.samples) {
    std::snprintf(buf, sizeof(buf), "%.6f,%.9f,%.9f,%.9f,%.9f\n", s.timestamp, s.error.x(), s.error.y(),
                  s.error.z(), s.error.norm());
    os << buf;
  }
}

}  // namespace livo
