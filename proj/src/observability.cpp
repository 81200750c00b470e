#include "obsv/observability.hpp"

#include <cmath>
#include <limits>

#include "obsv/error.hpp"

namespace obsv {

namespace {

void require_normalized(const StackedSensitivity& stacked) {
  if (!stacked.normalized) {
    fail(ErrorKind::kInvalidState, "observability analysis requires a normalized matrix");
  }
}

}  // namespace

void RankPolicy::validate() const {
  if (!(relative_tol > 0.0 && relative_tol < 1.0)) {
    fail(ErrorKind::kInvalidArgument, "rank tolerance must lie in (0, 1)");
  }
}

RankResult svd_rank(const Matrix& matrix, const RankPolicy& policy) {
  policy.validate();
  if (!matrix.allFinite()) {
    fail(ErrorKind::kNumericFailure, "SVD input contains non-finite entries");
  }
  RankResult out;
  if (matrix.size() == 0) {
    out.singular_values = Vector::Zero(0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> svd(matrix);
  out.singular_values = svd.singularValues();
  if (!out.singular_values.allFinite()) {
    fail(ErrorKind::kNumericFailure, "SVD produced non-finite singular values");
  }
  const double sigma1 = out.singular_values.size() ? out.singular_values[0] : 0.0;
  if (sigma1 <= 0.0) return out;
  const double cutoff = policy.relative_tol * sigma1;
  for (Eigen::Index i = 0; i < out.singular_values.size(); ++i) {
    if (out.singular_values[i] > cutoff) ++out.rank;
  }
  return out;
}

RankResult svd_rank(const StackedSensitivity& stacked, const RankPolicy& policy) {
  require_normalized(stacked);
  return svd_rank(stacked.matrix, policy);
}

bool is_observable(const Matrix& matrix, const RankPolicy& policy) {
  return svd_rank(matrix, policy).rank == matrix.cols();
}

bool is_observable(const StackedSensitivity& stacked, const RankPolicy& policy) {
  require_normalized(stacked);
  return is_observable(stacked.matrix, policy);
}

ObservabilityReport degree_of_observability(const Matrix& matrix, const RankPolicy& policy) {
  const Eigen::Index n = matrix.cols();
  if (n < 1) fail(ErrorKind::kInvalidArgument, "degree_of_observability: no columns");

  ObservabilityReport report;
  const RankResult rank = svd_rank(matrix, policy);
  report.rank = rank.rank;
  report.singular_values = rank.singular_values;
  report.alpha = rank.rank == n ? 1 : 0;

  // Residual of every column against the span of the chosen ones, updated
  // one orthonormal direction at a time.
  Matrix residual = matrix;
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  const double eps = std::numeric_limits<double>::epsilon();
  double first = 0.0;
  for (Eigen::Index step = 0; step < n; ++step) {
    Eigen::Index best = -1;
    double best_norm = -1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (chosen[static_cast<std::size_t>(j)]) continue;
      const double norm = residual.col(j).norm();
      if (norm > best_norm) {
        best_norm = norm;
        best = j;
      }
    }
    chosen[static_cast<std::size_t>(best)] = true;
    report.F_values.push_back(best_norm);
    report.column_order.push_back(static_cast<int>(best) + 1);
    if (step == 0) first = best_norm;

    // A residual at roundoff level carries no direction.
    if (best_norm > 0.0 && best_norm > 64.0 * eps * first) {
      const Vector q = residual.col(best) / best_norm;
      residual.noalias() -= q * (q.transpose() * residual);
    }
    residual.col(best).setZero();
  }
  for (double f : report.F_values) report.F_total += f;
  report.degree = report.alpha * report.F_total;
  return report;
}

ObservabilityReport degree_of_observability(const StackedSensitivity& stacked,
                                            const RankPolicy& policy) {
  require_normalized(stacked);
  return degree_of_observability(stacked.matrix, policy);
}

ObservabilityReport degree_for_subset(const SensorCatalog& catalog, const SensorSet& subset,
                                      const Trajectory& traj,
                                      const std::vector<Matrix>& state_sensitivity,
                                      const ScaleSet& scales, const RankPolicy& policy,
                                      Normalization mode) {
  const StackedSensitivity raw = build_stacked(catalog, subset, traj, state_sensitivity);
  return degree_of_observability(normalize(raw, scales, mode), policy);
}

SubsetEvaluator::SubsetEvaluator(const SensorCatalog& catalog, const Trajectory& traj,
                                 const std::vector<Matrix>& state_sensitivity, ScaleSet scales,
                                 RankPolicy policy, Normalization mode)
    : n_sensors_(catalog.size()),
      samples_(static_cast<int>(traj.states.size())),
      policy_(policy),
      scales_(std::move(scales)) {
  policy_.validate();
  full_ = normalize(build_stacked(catalog, catalog.all_ids(), traj, state_sensitivity), scales_,
                    mode);
}

StackedSensitivity SubsetEvaluator::stacked(const SensorSet& subset) const {
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (subset[i] < 1 || subset[i] > n_sensors_ || (i > 0 && subset[i] <= subset[i - 1])) {
      fail(ErrorKind::kInvalidArgument,
           "subset must be strictly increasing ids in 1.." + std::to_string(n_sensors_));
    }
  }
  const auto per_step = static_cast<Eigen::Index>(subset.size());
  StackedSensitivity out;
  out.matrix.resize(samples_ * per_step, full_.matrix.cols());
  out.rows.reserve(static_cast<std::size_t>(samples_ * per_step));
  Eigen::Index r = 0;
  for (int k = 0; k < samples_; ++k) {
    for (int id : subset) {
      out.matrix.row(r++) = full_.matrix.row(static_cast<Eigen::Index>(k) * n_sensors_ + id - 1);
      out.rows.push_back({id, k});
    }
  }
  out.columns = full_.columns;
  out.normalized = true;
  return out;
}

ObservabilityReport SubsetEvaluator::evaluate(const SensorSet& subset) const {
  if (subset.empty()) {
    ObservabilityReport empty;
    empty.singular_values = Vector::Zero(0);
    return empty;
  }
  return degree_of_observability(stacked(subset), policy_);
}

}  // namespace obsv
