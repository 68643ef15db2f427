#pragma once

#include <iosfwd>
#include <vector>

#include "livo/dataset.hpp"

namespace livo {

struct AteOptions {
  double max_time_gap = 0.01;  // seconds, for nearest-timestamp association
  /// Map the estimate into the ground-truth frame with the rigid transform
  /// that makes the first associated poses coincide.
  bool align_first_pose = true;
};

struct AteSample {
  double timestamp = 0.0;
  Vec3 error = Vec3::Zero();  // aligned estimate minus ground truth
};

struct AteReport {
  double rmse = 0.0;
  Vec3 rmse_axis = Vec3::Zero();
  double max_error = 0.0;
  std::vector<AteSample> samples;
};

/// Translational ATE. `groundtruth` must be time-sorted. Throws
/// EvaluationError with fewer than two associations.
AteReport computeAte(const std::vector<StampedPose>& estimate, const std::vector<StampedPose>& groundtruth,
                     const AteOptions& options = {});

/// "t,ex,ey,ez,norm" per sample.
void writeAteCsv(std::ostream& os, const AteReport& report);

}  // namespace livo
