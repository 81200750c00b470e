#include "obsv/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "obsv/error.hpp"
#include "obsv/parallel.hpp"

namespace obsv {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t which) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    which};
  return std::mt19937_64(seq);
}

void require_spd(const Matrix& m, Eigen::Index dim, const char* name) {
  if (m.rows() != dim || m.cols() != dim) {
    fail(ErrorKind::kInvalidArgument, std::string(name) + " has wrong dimensions");
  }
  if (!m.allFinite() || (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) {
    fail(ErrorKind::kInvalidArgument, std::string(name) + " must be symmetric");
  }
  if (dim > 0 && m.llt().info() != Eigen::Success) {
    fail(ErrorKind::kInvalidArgument, std::string(name) + " must be positive definite");
  }
}

Matrix symmetrize(const Matrix& p) { return 0.5 * (p + p.transpose()); }

}  // namespace

void NoiseSpec::validate(int n_states, int n_sensors) const {
  if (process_std.size() != n_states || measurement_std.size() != n_sensors) {
    fail(ErrorKind::kInvalidArgument, "noise spec dimensions do not match the model");
  }
  if (!process_std.allFinite() || !measurement_std.allFinite() ||
      (process_std.array() < 0.0).any() || (measurement_std.array() < 0.0).any()) {
    fail(ErrorKind::kInvalidArgument, "noise standard deviations must be finite and >= 0");
  }
}

NoisySimulation simulate_noisy(const SensorCatalog& catalog, const Vector& x0,
                               const std::vector<Vector>& inputs, int steps,
                               const NoiseSpec& noise) {
  const DiscreteModel& model = catalog.model();
  noise.validate(model.n_states, catalog.size());
  if (x0.size() != model.n_states || steps < 0 || inputs.size() < static_cast<std::size_t>(steps)) {
    fail(ErrorKind::kInvalidArgument, "simulate_noisy: inconsistent dimensions");
  }
  std::mt19937_64 process_rng = stream(noise.seed, 0);
  std::mt19937_64 measurement_rng = stream(noise.seed, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  NoisySimulation sim;
  sim.truth.states.reserve(static_cast<std::size_t>(steps) + 1);
  sim.truth.states.push_back(x0);
  sim.truth.inputs.assign(inputs.begin(), inputs.begin() + steps);
  for (int k = 0; k < steps; ++k) {
    Vector next;
    try {
      next = model.transition(sim.truth.states.back(), inputs[static_cast<std::size_t>(k)]);
    } catch (const IntegrationError& e) {
      throw IntegrationError(e.what(), k);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kDomain) throw IntegrationError(e.what(), k);
      throw;
    }
    for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += noise.process_std[i] * gauss(process_rng);
    if (!next.allFinite()) throw IntegrationError("non-finite noisy state", k);
    sim.truth.states.push_back(std::move(next));
  }
  for (const Vector& x : sim.truth.states) {
    Vector y(catalog.size());
    for (int id = 1; id <= catalog.size(); ++id) {
      y[id - 1] = catalog.output(id, x) + noise.measurement_std[id - 1] * gauss(measurement_rng);
    }
    sim.measurements.push_back(std::move(y));
  }
  return sim;
}

std::vector<Vector> select_measurements(const std::vector<Vector>& measurements,
                                        const SensorSet& subset) {
  std::vector<Vector> out;
  out.reserve(measurements.size());
  for (const Vector& y : measurements) {
    Vector row(static_cast<Eigen::Index>(subset.size()));
    for (std::size_t r = 0; r < subset.size(); ++r) {
      row[static_cast<Eigen::Index>(r)] = y[subset[r] - 1];
    }
    out.push_back(std::move(row));
  }
  return out;
}

EstimationRun run_ekf(const SensorCatalog& catalog, const SensorSet& subset,
                      const Trajectory& truth, const std::vector<Vector>& measurements,
                      const EkfConfig& config) {
  catalog.validate_subset(subset);
  const DiscreteModel& model = catalog.model();
  const Eigen::Index n = model.n_states;
  const auto p = static_cast<Eigen::Index>(subset.size());
  require_spd(config.Q_w, n, "Q_w");
  require_spd(config.R_v, p, "R_v");
  require_spd(config.P0, n, "P0");
  if (config.x0_guess.size() != n) fail(ErrorKind::kInvalidArgument, "x0_guess has wrong length");
  if (measurements.size() != truth.states.size() ||
      truth.inputs.size() + 1 != truth.states.size()) {
    fail(ErrorKind::kInvalidArgument, "run_ekf: measurements must cover every truth state");
  }
  for (const Vector& y : measurements) {
    if (y.size() != p) fail(ErrorKind::kInvalidArgument, "run_ekf: measurement width mismatch");
  }

  EstimationRun run;
  run.truth = truth;
  run.measurements = measurements;
  run.subset = subset;

  const Matrix identity = Matrix::Identity(n, n);
  Vector x = config.x0_guess;
  Matrix P = config.P0;
  for (std::size_t k = 0; k < measurements.size(); ++k) {
    const long step = static_cast<long>(k);
    try {
      if (k > 0) {
        const Vector& u = truth.inputs[k - 1];
        const Matrix F = jacobian_state(model, x, u, config.jacobian);
        x = model.transition(x, u);
        P = symmetrize(F * P * F.transpose() + config.Q_w);
      }
      Matrix H(p, n);
      Vector innovation(p);
      for (Eigen::Index r = 0; r < p; ++r) {
        const int id = subset[static_cast<std::size_t>(r)];
        H.row(r) = catalog.gradient(id, x).transpose();
        innovation[r] = measurements[k][r] - catalog.output(id, x);
      }
      Matrix S = symmetrize(H * P * H.transpose() + config.R_v);
      const double scale = std::max(S.diagonal().cwiseAbs().maxCoeff(), 1.0);
      S.diagonal().array() += 1e-12 * scale;
      Eigen::LDLT<Matrix> ldlt(S);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
        throw IntegrationError("innovation covariance is singular", step);
      }
      const Matrix gain = ldlt.solve(H * P).transpose();
      x += gain * innovation;
      const Matrix a = identity - gain * H;
      P = symmetrize(a * P * a.transpose() + gain * config.R_v * gain.transpose());
    } catch (const IntegrationError& e) {
      throw IntegrationError(e.what(), step);
    } catch (const Error& e) {
      throw IntegrationError(e.what(), step);
    }
    if (!x.allFinite() || !P.allFinite()) {
      throw IntegrationError("non-finite filter state", step);
    }
    run.estimates.push_back(x);
    run.covariances.push_back(P);
  }
  run.rmse = rmse(run);
  run.mean_e = mean_normalized_error(run);
  return run;
}

double rmse(const EstimationRun& run) {
  if (run.estimates.empty()) return 0.0;
  double sum = 0.0;
  Eigen::Index count = 0;
  for (std::size_t k = 0; k < run.estimates.size(); ++k) {
    sum += (run.estimates[k] - run.truth.states[k]).squaredNorm();
    count += run.estimates[k].size();
  }
  return count == 0 ? 0.0 : std::sqrt(sum / static_cast<double>(count));
}

double mean_normalized_error(const EstimationRun& run) {
  const std::size_t steps = run.estimates.size();
  if (steps == 0) return 0.0;
  const Eigen::Index n = run.estimates.front().size();
  Vector normalizer = Vector::Zero(n);
  for (std::size_t k = 0; k < steps; ++k) {
    normalizer = normalizer.cwiseMax((run.estimates[k] - run.truth.states[k]).cwiseAbs());
  }
  double total = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const Vector err = run.estimates[k] - run.truth.states[k];
    double sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (normalizer[i] > 0.0) sq += (err[i] / normalizer[i]) * (err[i] / normalizer[i]);
    }
    total += std::sqrt(sq);
  }
  return total / static_cast<double>(steps);
}

std::vector<ComparisonRow> subset_comparison(const SensorCatalog& catalog,
                                             const std::vector<SensorSet>& subsets,
                                             const ComparisonSetup& setup,
                                             const SubsetEvaluator* evaluator, int threads) {
  const int n = catalog.n_states();
  const int m = catalog.size();
  if (setup.runs < 1) fail(ErrorKind::kInvalidArgument, "subset_comparison needs runs >= 1");
  if (setup.guess.size() != n || setup.tuning_state_std.size() != n ||
      setup.tuning_sensor_std.size() != m) {
    fail(ErrorKind::kInvalidArgument, "subset_comparison: tuning dimensions do not match");
  }
  if ((setup.tuning_state_std.array() <= 0.0).any() || (setup.tuning_sensor_std.array() <= 0.0).any()) {
    fail(ErrorKind::kInvalidArgument, "EKF tuning standard deviations must be positive");
  }
  for (const SensorSet& s : subsets) catalog.validate_subset(s);

  const auto runs = static_cast<std::size_t>(setup.runs);
  std::vector<std::optional<NoisySimulation>> sims(runs);
  std::vector<std::string> sim_errors(runs);
  parallel_for(runs, threads, [&](std::size_t r) {
    NoiseSpec noise{setup.process_std, setup.measurement_std, setup.base_seed + r};
    try {
      sims[r] = simulate_noisy(catalog, setup.x0, setup.inputs, setup.steps, noise);
    } catch (const IntegrationError& e) {
      sim_errors[r] = std::string("truth simulation: ") + e.what();
    }
  });

  const Matrix q = setup.tuning_state_std.array().square().matrix().asDiagonal();
  struct Outcome {
    bool ok = false;
    double rmse = 0.0;
    double mean_e = 0.0;
    std::string error;
  };
  std::vector<Outcome> outcomes(subsets.size() * runs);
  parallel_for(outcomes.size(), threads, [&](std::size_t idx) {
    const std::size_t s = idx / runs;
    const std::size_t r = idx % runs;
    Outcome& out = outcomes[idx];
    if (!sims[r]) {
      out.error = sim_errors[r];
      return;
    }
    const SensorSet& subset = subsets[s];
    Vector r_std(static_cast<Eigen::Index>(subset.size()));
    for (std::size_t i = 0; i < subset.size(); ++i) {
      r_std[static_cast<Eigen::Index>(i)] = setup.tuning_sensor_std[subset[i] - 1];
    }
    EkfConfig cfg;
    cfg.x0_guess = setup.guess;
    cfg.Q_w = q;
    cfg.P0 = q;
    cfg.R_v = r_std.array().square().matrix().asDiagonal();
    try {
      const EstimationRun run = run_ekf(catalog, subset, sims[r]->truth,
                                        select_measurements(sims[r]->measurements, subset), cfg);
      out.ok = true;
      out.rmse = run.rmse;
      out.mean_e = run.mean_e;
    } catch (const Error& e) {
      out.error = "seed " + std::to_string(setup.base_seed + r) + ": " + e.what();
    }
  });

  std::vector<ComparisonRow> rows(subsets.size());
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    ComparisonRow& row = rows[s];
    row.subset = subsets[s];
    std::vector<double> values;
    double normalized = 0.0;
    for (std::size_t r = 0; r < runs; ++r) {
      const Outcome& out = outcomes[s * runs + r];
      if (out.ok) {
        values.push_back(out.rmse);
        normalized += out.mean_e;
      } else {
        ++row.failed;
        if (row.first_failure.empty()) row.first_failure = out.error;
      }
    }
    row.completed = static_cast<int>(values.size());
    if (values.empty()) {
      row.mean_rmse = std::numeric_limits<double>::infinity();
      row.std_rmse = 0.0;
      row.mean_normalized = std::numeric_limits<double>::infinity();
    } else {
      double sum = 0.0;
      for (double v : values) sum += v;
      row.mean_rmse = sum / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean_rmse) * (v - row.mean_rmse);
      row.std_rmse = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
      row.mean_normalized = normalized / static_cast<double>(values.size());
    }
    if (evaluator != nullptr) row.degree = evaluator->evaluate(row.subset).degree;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.mean_rmse != b.mean_rmse) return a.mean_rmse < b.mean_rmse;
    return a.subset < b.subset;
  });
  return rows;
}

}  // namespace obsv
