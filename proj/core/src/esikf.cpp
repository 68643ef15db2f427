#include "livo/esikf.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

namespace livo {

void LinearSystem::add(const StateRow& J, double r, double w) {
  hessian.noalias() += w * J.transpose() * J;
  gradient.noalias() += w * r * J.transpose();
  cost += w * r * r;
  ++terms;
}

namespace {

Covariance priorJacobian(const StateVector& e) {
  Covariance J = Covariance::Identity();
  J.block<3, 3>(idx::kRot, idx::kRot) = so3::rightJacobianInverse(e.segment<3>(idx::kRot));
  return J;
}

UpdateResult unchanged(const Prior& prior, UpdateStatus status) {
  UpdateResult r;
  r.state = prior.state;
  r.cov = prior.cov;
  r.status = status;
  r.converged = status == UpdateStatus::kNoMeasurements;
  return r;
}

}  // namespace

UpdateResult iteratedUpdate(const Prior& prior, const ResidualProvider& provider, const IteratedUpdateConfig& cfg,
                            const State* initial) {
  State x = initial ? *initial : prior.state;
  LinearSystem sys = provider(x);
  if (sys.terms == 0) {
    UpdateResult r = unchanged(prior, UpdateStatus::kNoMeasurements);
    r.state = x;
    return r;
  }

  Eigen::LDLT<Covariance> prior_ldlt(prior.cov);
  if (prior_ldlt.info() != Eigen::Success || !prior_ldlt.isPositive()) return unchanged(prior, UpdateStatus::kSingular);
  const Covariance prior_info = prior_ldlt.solve(Covariance::Identity());
  if (!prior_info.allFinite()) return unchanged(prior, UpdateStatus::kSingular);

  const auto priorCost = [&](const State& s) {
    const StateVector e = boxminus(s, prior.state);
    return e.dot(prior_info * e);
  };

  UpdateResult result;
  double cost = priorCost(x) + sys.cost;
  result.cost_history.push_back(cost);
  result.term_history.push_back(sys.terms);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const StateVector e = boxminus(x, prior.state);
    const Covariance Jp = priorJacobian(e);
    const Covariance H = Jp.transpose() * prior_info * Jp + sys.hessian;
    const StateVector b = -(Jp.transpose() * prior_info * e + sys.gradient);
    Eigen::LDLT<Covariance> ldlt(H);
    StateVector delta = ldlt.solve(b);
    if (ldlt.info() != Eigen::Success || !delta.allFinite()) return unchanged(prior, UpdateStatus::kSingular);

    // Step halving on cost increase. When the correspondence set changes
    // size, the measurement cost is rescaled to the previous term count.
    bool accepted = false;
    State x_new;
    LinearSystem sys_new;
    double cost_new = 0.0;
    for (int h = 0; h <= cfg.max_step_halvings; ++h) {
      x_new = boxplus(x, delta);
      sys_new = provider(x_new);
      if (sys_new.terms == 0) {
        delta *= 0.5;
        continue;
      }
      const double scale = static_cast<double>(sys.terms) / static_cast<double>(sys_new.terms);
      cost_new = priorCost(x_new) + sys_new.cost * scale;
      if (cost_new <= cost * (1.0 + 1e-9) + 1e-12) {
        accepted = true;
        break;
      }
      delta *= 0.5;
    }
    ++result.iterations;
    if (!accepted) {
      result.status = UpdateStatus::kCostIncrease;
      result.converged = false;
      break;
    }
    x = x_new;
    sys = sys_new;
    cost = priorCost(x) + sys.cost;
    result.cost_history.push_back(cost);
    result.term_history.push_back(sys.terms);
    if (delta.segment<3>(idx::kRot).norm() < cfg.eps_rot && delta.segment<3>(idx::kPos).norm() < cfg.eps_pos) {
      result.converged = true;
      break;
    }
  }

  const StateVector e = boxminus(x, prior.state);
  const Covariance Jp = priorJacobian(e);
  const Covariance H = Jp.transpose() * prior_info * Jp + sys.hessian;
  Eigen::LDLT<Covariance> ldlt(H);
  Covariance cov = ldlt.solve(Covariance::Identity());
  if (ldlt.info() != Eigen::Success || !cov.allFinite()) return unchanged(prior, UpdateStatus::kSingular);
  result.state = x;
  result.cov = 0.5 * (cov + cov.transpose());
  result.final_cost = cost;
  result.final_terms = sys.terms;
  return result;
}

UpdateResult lidarUpdate(const Prior& prior, const std::vector<LidarPoint>& scan, const IncrementalKdTree& map,
                         const RigidTransform& T_IL, const LidarUpdateConfig& cfg) {
  const ResidualProvider provider = [&](const State& x) {
    LinearSystem sys;
    for (const auto& t : residualTermsForScan(x, T_IL, scan, map, cfg.measurement)) {
      sys.add(t.jacobian, t.residual, t.weight);
    }
    return sys;
  };
  UpdateResult r = iteratedUpdate(prior, provider, cfg.iteration);
  r.degenerate = r.final_terms < cfg.min_terms;
  return r;
}

namespace {

LinearSystem accumulateVisual(const std::vector<PhotoResidualTerm>& terms) {
  // Only the attitude and position columns are nonzero.
  Eigen::Matrix<double, 6, 6> H6 = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> g6 = Eigen::Matrix<double, 6, 1>::Zero();
  LinearSystem sys;
  for (const auto& t : terms) {
    Eigen::Matrix<double, kPatchArea, 6> J;
    J.leftCols<3>() = t.jacobian.middleCols<3>(idx::kRot);
    J.rightCols<3>() = t.jacobian.middleCols<3>(idx::kPos);
    H6.noalias() += t.weight * J.transpose() * J;
    g6.noalias() += t.weight * J.transpose() * t.residuals;
    sys.cost += t.weight * t.residuals.squaredNorm();
    ++sys.terms;
  }
  const int blocks[2] = {idx::kRot, idx::kPos};
  for (int i = 0; i < 2; ++i) {
    sys.gradient.segment<3>(blocks[i]) = g6.segment<3>(3 * i);
    for (int j = 0; j < 2; ++j) sys.hessian.block<3, 3>(blocks[i], blocks[j]) = H6.block<3, 3>(3 * i, 3 * j);
  }
  return sys;
}

}  // namespace

UpdateResult visualUpdate(const Prior& prior, const ImagePyramid& pyramid,
                          std::span<const VisualCorrespondence> correspondences, const SensorConfig& sensors,
                          const VisualUpdateConfig& cfg) {
  if (correspondences.empty()) return unchanged(prior, UpdateStatus::kNoMeasurements);

  State current = prior.state;
  UpdateResult combined = unchanged(prior, UpdateStatus::kNoMeasurements);
  bool any_level = false;
  for (int level = kPyramidLevels - 1; level >= 0; --level) {
    const ResidualProvider provider = [&](const State& x) {
      return accumulateVisual(buildVisualTerms(x, sensors, correspondences, pyramid, level, cfg.measurement));
    };
    UpdateResult r = iteratedUpdate(prior, provider, cfg.iteration, &current);
    if (r.status == UpdateStatus::kNoMeasurements) continue;
    if (r.status == UpdateStatus::kSingular) return unchanged(prior, UpdateStatus::kSingular);
    any_level = true;
    current = r.state;
    combined.iterations += r.iterations;
    combined.cost_history.insert(combined.cost_history.end(), r.cost_history.begin(), r.cost_history.end());
    combined.term_history.insert(combined.term_history.end(), r.term_history.begin(), r.term_history.end());
    combined.converged = r.converged;
    combined.status = r.status;
    combined.final_cost = r.final_cost;
    combined.final_terms = r.final_terms;
    combined.cov = r.cov;  // finest evaluated level wins
  }
  if (!any_level) return unchanged(prior, UpdateStatus::kNoMeasurements);
  combined.state = current;
  return combined;
}

std::vector<double> photometricErrors(const State& x, const SensorConfig& sensors, const ImagePyramid& pyramid,
                                      std::span<const VisualCorrespondence> correspondences,
                                      const VisualMeasurementConfig& cfg) {
  std::vector<double> out;
  out.reserve(correspondences.size());
  for (const auto& corr : correspondences) {
    const auto term = photometricResidual(x, sensors, corr, pyramid, 0, cfg);
    out.push_back(term ? term->residuals.cwiseAbs().mean() : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

}  // namespace livo
