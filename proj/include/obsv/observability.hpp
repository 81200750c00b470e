#pragma once

#include <vector>

#include "obsv/sensitivity.hpp"

namespace obsv {

struct RankPolicy {
  /// Singular values above relative_tol * sigma_1 count towards the rank.
  double relative_tol = 1e-8;

  void validate() const;
};

struct RankResult {
  int rank = 0;
  Vector singular_values;  // descending
};

struct ObservabilityReport {
  int rank = 0;
  Vector singular_values;
  int alpha = 0;
  std::vector<double> F_values;  // residual norm at each orthogonalization step
  std::vector<int> column_order;  // 1-based state indices in selection order
  double F_total = 0.0;
  double degree = 0.0;
};

RankResult svd_rank(const Matrix& matrix, const RankPolicy& policy = {});
/// Requires a normalized matrix.
RankResult svd_rank(const StackedSensitivity& stacked, const RankPolicy& policy = {});

bool is_observable(const Matrix& matrix, const RankPolicy& policy = {});
bool is_observable(const StackedSensitivity& stacked, const RankPolicy& policy = {});

/// Successive orthogonalization of the columns: F_1 is the largest column
/// norm, each later F is the largest residual norm of a not-yet-chosen
/// column after projecting out the span of the chosen ones. Ties go to the
/// lowest state index. degree = alpha * sum(F), alpha = [rank == n].
ObservabilityReport degree_of_observability(const Matrix& matrix, const RankPolicy& policy = {});
ObservabilityReport degree_of_observability(const StackedSensitivity& stacked,
                                            const RankPolicy& policy = {});

/// build_stacked -> normalize -> degree_of_observability.
ObservabilityReport degree_for_subset(const SensorCatalog& catalog, const SensorSet& subset,
                                      const Trajectory& traj,
                                      const std::vector<Matrix>& state_sensitivity,
                                      const ScaleSet& scales, const RankPolicy& policy = {},
                                      Normalization mode = Normalization::kBoth);

/// Everything a subset evaluation needs, with the full-catalog normalized
/// matrix assembled once. Evaluating a subset selects its rows, which is
/// entrywise identical to building that subset's matrix directly.
class SubsetEvaluator {
 public:
  SubsetEvaluator(const SensorCatalog& catalog, const Trajectory& traj,
                  const std::vector<Matrix>& state_sensitivity, ScaleSet scales,
                  RankPolicy policy = {}, Normalization mode = Normalization::kBoth);

  int n_sensors() const { return n_sensors_; }
  int n_states() const { return static_cast<int>(full_.matrix.cols()); }
  int horizon() const { return samples_ - 1; }
  const RankPolicy& policy() const { return policy_; }
  const ScaleSet& scales() const { return scales_; }
  const StackedSensitivity& full() const { return full_; }

  /// Normalized stacked matrix for `subset` (strictly increasing ids).
  StackedSensitivity stacked(const SensorSet& subset) const;

  /// Empty subsets are reported as rank 0, degree 0.
  ObservabilityReport evaluate(const SensorSet& subset) const;

 private:
  int n_sensors_;
  int samples_;
  RankPolicy policy_;
  ScaleSet scales_;
  StackedSensitivity full_;
};

}  // namespace obsv
