#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "obsv/dynamics.hpp"
#include "obsv/observability.hpp"
#include "obsv/sensitivity.hpp"

namespace obsv {

struct NoiseSpec {
  Vector process_std;      // per state
  Vector measurement_std;  // per catalog sensor
  std::uint64_t seed = 0;

  void validate(int n_states, int n_sensors) const;
};

/// Truth trajectory plus readings of every catalog sensor at k = 0..K.
struct NoisySimulation {
  Trajectory truth;
  std::vector<Vector> measurements;
};

/// x(k+1) = f(x(k), u(k)) + w(k), y(k) = h(x(k)) + v(k). Process and
/// measurement noise come from separate streams derived from `noise.seed`,
/// so the truth for a seed does not depend on the measurement noise level.
NoisySimulation simulate_noisy(const SensorCatalog& catalog, const Vector& x0,
                               const std::vector<Vector>& inputs, int steps,
                               const NoiseSpec& noise);

/// Rows of `measurements` restricted to `subset`, ascending id.
std::vector<Vector> select_measurements(const std::vector<Vector>& measurements,
                                        const SensorSet& subset);

struct EkfConfig {
  Vector x0_guess;
  Matrix Q_w;  // n x n
  Matrix R_v;  // |subset| x |subset|
  Matrix P0;   // n x n
  JacobianConfig jacobian{};
};

struct EstimationRun {
  Trajectory truth;
  std::vector<Vector> measurements;  // subset readings, k = 0..K
  std::vector<Vector> estimates;     // filtered x(k|k), k = 0..K
  std::vector<Matrix> covariances;   // P(k|k)
  SensorSet subset;
  double rmse = 0.0;
  double mean_e = 0.0;
};

/// Extended Kalman filter. Step 0 updates the prior (x0_guess, P0) with y(0);
/// each later step predicts through the model and updates with y(k). The
/// covariance update is in Joseph form and symmetrized. Throws
/// IntegrationError carrying the step on a non-finite or singular step.
EstimationRun run_ekf(const SensorCatalog& catalog, const SensorSet& subset,
                      const Trajectory& truth, const std::vector<Vector>& measurements,
                      const EkfConfig& config);

/// sqrt of the mean over steps and states of the squared estimation error.
double rmse(const EstimationRun& run);

/// (1/N) sum_k sqrt(sum_i (e_i(k) / max_k |e_i|)^2); states never in error
/// contribute zero.
double mean_normalized_error(const EstimationRun& run);

struct ComparisonSetup {
  Vector x0;
  std::vector<Vector> inputs;  // length `steps`
  int steps = 0;
  Vector process_std;
  Vector measurement_std;  // per catalog sensor
  /// Run r uses seed base_seed + r.
  std::uint64_t base_seed = 0;
  int runs = 1;
  Vector guess;
  Vector tuning_state_std;   // Q_w = P0 = diag(tuning_state_std^2)
  Vector tuning_sensor_std;  // R_v = diag(tuning_sensor_std^2), per catalog sensor
};

struct ComparisonRow {
  SensorSet subset;
  double mean_rmse = 0.0;  // over completed runs; +inf when none completed
  double std_rmse = 0.0;   // sample standard deviation
  double mean_normalized = 0.0;
  std::optional<double> degree;
  int completed = 0;
  int failed = 0;
  std::string first_failure;
};

/// Runs every subset against the same seeded truths. Rows are sorted by mean
/// RMSE ascending, then by subset. A failed run is counted, not fatal.
/// `evaluator`, when given, attaches each subset's degree.
std::vector<ComparisonRow> subset_comparison(const SensorCatalog& catalog,
                                             const std::vector<SensorSet>& subsets,
                                             const ComparisonSetup& setup,
                                             const SubsetEvaluator* evaluator = nullptr,
                                             int threads = 1);

}  // namespace obsv
