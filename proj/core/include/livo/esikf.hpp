#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "livo/lidar_map.hpp"
#include "livo/lidar_measurement.hpp"
#include "livo/state.hpp"
#include "livo/visual_measurement.hpp"

namespace livo {

/// Gaussian prior x ~ N(x_hat, P_hat) in the tangent space at x_hat.
struct Prior {
  State state;
  Covariance cov;
};

/// Measurement contribution linearized at one state: H^T W H, H^T W r and
/// sum(w r^2) over `terms` scalar residual groups.
struct LinearSystem {
  Covariance hessian = Covariance::Zero();
  StateVector gradient = StateVector::Zero();
  double cost = 0.0;
  std::size_t terms = 0;

  void add(const StateRow& J, double r, double w);
};

/// Re-linearizes the measurements at a candidate state.
using ResidualProvider = std::function<LinearSystem(const State&)>;

struct IteratedUpdateConfig {
  int max_iterations = 5;
  /// Convergence when |d_rot| < eps_rot (rad) and |d_pos| < eps_pos (m).
  double eps_rot = 1e-4;
  double eps_pos = 1e-4;
  int max_step_halvings = 4;
};

enum class UpdateStatus { kOk, kNoMeasurements, kSingular, kCostIncrease };

struct UpdateResult {
  State state;
  Covariance cov = Covariance::Zero();
  int iterations = 0;
  bool converged = false;
  double final_cost = 0.0;
  UpdateStatus status = UpdateStatus::kOk;
  bool degenerate = false;  // fewer valid terms than the configured minimum
  std::size_t final_terms = 0;
  std::vector<double> cost_history;         // per accepted iterate, starting with the initial one
  std::vector<std::size_t> term_history;
};

/// Gauss-Newton on ||x [-] x_hat||^2_P + sum w r(x)^2, parameterizing each
/// step in the tangent space of the current iterate. The prior residual is
/// linearized through the inverse right Jacobian of its rotation block. The
/// posterior covariance is the inverse Hessian at the final iterate.
///
/// `initial` warm-starts the iteration; it defaults to the prior mean.
UpdateResult iteratedUpdate(const Prior& prior, const ResidualProvider& provider, const IteratedUpdateConfig& cfg,
                            const State* initial = nullptr);

struct LidarUpdateConfig {
  IteratedUpdateConfig iteration{};
  LidarMeasurementConfig measurement{};
  std::size_t min_terms = 50;
};

/// Frame-to-map point-to-plane update; correspondences are re-searched at
/// every iterate.
UpdateResult lidarUpdate(const Prior& prior, const std::vector<LidarPoint>& scan, const IncrementalKdTree& map,
                         const RigidTransform& T_IL, const LidarUpdateConfig& cfg = {});

struct VisualUpdateConfig {
  IteratedUpdateConfig iteration{10, 1e-4, 1e-4, 4};
  VisualMeasurementConfig measurement{};
};

/// Coarse-to-fine photometric update over pyramid levels 2, 1, 0. Each level
/// starts from the previous level's estimate and uses the original prior;
/// the returned covariance is the one of the finest level.
UpdateResult visualUpdate(const Prior& prior, const ImagePyramid& pyramid,
                          std::span<const VisualCorrespondence> correspondences, const SensorConfig& sensors,
                          const VisualUpdateConfig& cfg = {});

/// Mean absolute level-0 photometric residual per correspondence at `x`
/// (NaN where the patch cannot be evaluated).
std::vector<double> photometricErrors(const State& x, const SensorConfig& sensors, const ImagePyramid& pyramid,
                                      std::span<const VisualCorrespondence> correspondences,
                                      const VisualMeasurementConfig& cfg = {});

}  // namespace livo
