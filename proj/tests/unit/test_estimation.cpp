#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "obsv/error.hpp"
#include "obsv/estimation.hpp"
#include "obsv/models.hpp"
#include "oracles.hpp"

using namespace obsv;

namespace {

Matrix diag_sq(const Vector& v) { return v.array().square().matrix().asDiagonal(); }

EstimationRun run_from(std::vector<Vector> truth, std::vector<Vector> estimates) {
  EstimationRun r;
  r.truth.states = std::move(truth);
  r.estimates = std::move(estimates);
  return r;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct Linear {
  Matrix A;
  Matrix C;
  SensorCatalog catalog;
};

Linear linear_system() {
  Matrix a(3, 3);
  a << 0.95, 0.10, 0.0,
       -0.05, 0.90, 0.08,
       0.0, 0.02, 0.85;
  LinearBenchmark b;
  b.A = a;
  b.sensor_rows = {Vector::Unit(3, 0), vec({0.0, 1.0, 1.0})};
  Matrix c(2, 3);
  c.row(0) = b.sensor_rows[0].transpose();
  c.row(1) = b.sensor_rows[1].transpose();
  return {a, c, b.catalog()};
}

}  // namespace

TEST_CASE("noise-free simulation equals the deterministic rollout") {
  const SensorCatalog cat = four_cstr_catalog();
  const Vector xs = four_cstr_steady_state();
  const Vector u = four_cstr_inputs();
  NoiseSpec noise{Vector::Zero(8), Vector::Zero(8), 5};
  const NoisySimulation sim =
      simulate_noisy(cat, xs, std::vector<Vector>(12, u), 12, noise);
  const Trajectory ref = simulate_constant(cat.model(), xs, u, 12);
  REQUIRE(sim.truth.states.size() == 13);
  for (std::size_t k = 0; k < ref.states.size(); ++k) {
    CHECK(sim.truth.states[k] == ref.states[k]);
    CHECK(sim.measurements[k] == ref.states[k]);
  }
}

TEST_CASE("a fixed seed reproduces the noisy simulation exactly") {
  const Linear sys = linear_system();
  NoiseSpec noise{Vector::Constant(3, 0.1), Vector::Constant(2, 0.2), 42};
  const std::vector<Vector> inputs(30, Vector());
  const NoisySimulation a = simulate_noisy(sys.catalog, Vector::Ones(3), inputs, 30, noise);
  const NoisySimulation b = simulate_noisy(sys.catalog, Vector::Ones(3), inputs, 30, noise);
  for (std::size_t k = 0; k < a.truth.states.size(); ++k) {
    CHECK(a.truth.states[k] == b.truth.states[k]);
    CHECK(a.measurements[k] == b.measurements[k]);
  }
  noise.seed = 43;
  const NoisySimulation c = simulate_noisy(sys.catalog, Vector::Ones(3), inputs, 30, noise);
  CHECK(c.truth.states[5] != a.truth.states[5]);
}

TEST_CASE("process truth does not depend on the measurement noise level") {
  const Linear sys = linear_system();
  const std::vector<Vector> inputs(10, Vector());
  const NoisySimulation a = simulate_noisy(sys.catalog, Vector::Ones(3), inputs, 10,
                                           {Vector::Constant(3, 0.1), Vector::Zero(2), 9});
  const NoisySimulation b = simulate_noisy(sys.catalog, Vector::Ones(3), inputs, 10,
                                           {Vector::Constant(3, 0.1), Vector::Constant(2, 3.0), 9});
  for (std::size_t k = 0; k < a.truth.states.size(); ++k) CHECK(a.truth.states[k] == b.truth.states[k]);
}

TEST_CASE("sample noise statistics match the requested standard deviations") {
  // Identity dynamics make the process increments observable directly.
  DiscreteModel d;
  d.n_states = 8;
  d.n_inputs = 0;
  d.transition = [](const Vector& x, const Vector&) { return x; };
  std::vector<SensorDef> sensors;
  for (int j = 0; j < 8; ++j) {
    SensorDef s;
    s.output = [j](const Vector& x) { return x[j]; };
    sensors.push_back(s);
  }
  const SensorCatalog cat(d, sensors);
  const Vector xs = four_cstr_steady_state();
  const int steps = 10000;
  const NoiseSpec noise{0.1 * xs, 0.1 * xs, 11};
  const NoisySimulation sim =
      simulate_noisy(cat, xs, std::vector<Vector>(steps, Vector()), steps, noise);
  Vector w2 = Vector::Zero(8);
  Vector v2 = Vector::Zero(8);
  for (int k = 0; k < steps; ++k) {
    const Vector w = sim.truth.states[k + 1] - sim.truth.states[k];
    const Vector v = sim.measurements[k] - sim.truth.states[k];
    w2 += w.cwiseProduct(w);
    v2 += v.cwiseProduct(v);
  }
  for (int j = 0; j < 8; ++j) {
    CHECK(std::sqrt(w2[j] / steps) == doctest::Approx(0.1 * xs[j]).epsilon(0.05));
    CHECK(std::sqrt(v2[j] / steps) == doctest::Approx(0.1 * xs[j]).epsilon(0.05));
  }
}

TEST_CASE("noise spec validation") {
  const Linear sys = linear_system();
  const std::vector<Vector> inputs(2, Vector());
  CHECK_THROWS_AS(simulate_noisy(sys.catalog, Vector::Ones(3), inputs, 2,
                                 {Vector::Constant(3, -0.1), Vector::Zero(2), 1}),
                  Error);
  CHECK_THROWS_AS(simulate_noisy(sys.catalog, Vector::Ones(3), inputs, 2,
                                 {Vector::Zero(2), Vector::Zero(2), 1}),
                  Error);
}

TEST_CASE("EKF on a linear model equals the linear Kalman filter") {
  const Linear sys = linear_system();
  const int steps = 40;
  const NoisySimulation sim =
      simulate_noisy(sys.catalog, vec({1.0, -0.5, 2.0}), std::vector<Vector>(steps, Vector()), steps,
                     {Vector::Constant(3, 0.05), Vector::Constant(2, 0.1), 3});
  EkfConfig cfg;
  cfg.x0_guess = vec({0.5, 0.0, 1.0});
  cfg.Q_w = diag_sq(Vector::Constant(3, 0.05));
  cfg.R_v = diag_sq(Vector::Constant(2, 0.1));
  cfg.P0 = Matrix::Identity(3, 3);
  const EstimationRun run = run_ekf(sys.catalog, {1, 2}, sim.truth, sim.measurements, cfg);
  const auto ref = oracle::linear_kalman(sys.A, sys.C, cfg.Q_w, cfg.R_v, cfg.x0_guess, cfg.P0,
                                         sim.measurements);
  REQUIRE(ref.size() == run.estimates.size());
  for (std::size_t k = 0; k < ref.size(); ++k) CHECK((run.estimates[k] - ref[k]).norm() < 1e-10);
}

TEST_CASE("covariances stay symmetric positive semidefinite") {
  const SensorCatalog cat = four_cstr_catalog();
  const Vector xs = four_cstr_steady_state();
  const int steps = 40;
  const NoisySimulation sim =
      simulate_noisy(cat, xs, std::vector<Vector>(steps, four_cstr_inputs()), steps,
                     {0.001 * xs, 0.01 * xs, 1001});
  EkfConfig cfg;
  cfg.x0_guess = 1.05 * xs;
  cfg.Q_w = diag_sq(0.1 * xs);
  cfg.P0 = cfg.Q_w;
  cfg.R_v = diag_sq(0.1 * vec({xs[3], xs[7]}));
  const EstimationRun run =
      run_ekf(cat, {4, 8}, sim.truth, select_measurements(sim.measurements, {4, 8}), cfg);
  for (const Matrix& p : run.covariances) {
    CHECK((p - p.transpose()).norm() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(p).eigenvalues().minCoeff() >= -1e-9 * p.norm());
  }
}

TEST_CASE("exact guess without noise tracks the truth") {
  const SensorCatalog cat = four_cstr_catalog();
  const Vector xs = four_cstr_steady_state();
  const int steps = 30;
  const NoisySimulation sim =
      simulate_noisy(cat, xs, std::vector<Vector>(steps, four_cstr_inputs()), steps,
                     {Vector::Zero(8), Vector::Zero(8), 1});
  EkfConfig cfg;
  cfg.x0_guess = xs;
  cfg.Q_w = diag_sq(0.1 * xs);
  cfg.P0 = cfg.Q_w;
  cfg.R_v = diag_sq(0.1 * vec({xs[0], xs[7]}));
  const EstimationRun run =
      run_ekf(cat, {1, 8}, sim.truth, select_measurements(sim.measurements, {1, 8}), cfg);
  for (std::size_t k = 0; k < run.estimates.size(); ++k) {
    CHECK((run.estimates[k] - sim.truth.states[k]).cwiseAbs().maxCoeff() < 1e-9);
  }
  CHECK(run.rmse < 1e-9);
}

TEST_CASE("CSTR estimates from a perturbed guess converge toward the truth") {
  const SensorCatalog cat = four_cstr_catalog();
  const Vector xs = four_cstr_steady_state();
  const int steps = 120;
  const NoisySimulation sim =
      simulate_noisy(cat, xs, std::vector<Vector>(steps, four_cstr_inputs()), steps,
                     {Vector::Zero(8), 0.01 * xs, 7});
  EkfConfig cfg;
  cfg.x0_guess = 1.05 * xs;
  cfg.Q_w = diag_sq(0.1 * xs);
  cfg.P0 = cfg.Q_w;
  cfg.R_v = diag_sq(0.1 * vec({xs[0], xs[7]}));
  const EstimationRun run =
      run_ekf(cat, {1, 8}, sim.truth, select_measurements(sim.measurements, {1, 8}), cfg);
  auto window_rmse = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t k = from; k < to; ++k) s += (run.estimates[k] - sim.truth.states[k]).squaredNorm();
    return std::sqrt(s / static_cast<double>((to - from) * 8));
  };
  const std::size_t n = run.estimates.size();
  CHECK(window_rmse(3 * n / 4, n) < window_rmse(0, n / 4));
}

TEST_CASE("run_ekf validates its configuration") {
  const Linear sys = linear_system();
  const NoisySimulation sim = simulate_noisy(sys.catalog, Vector::Ones(3),
                                             std::vector<Vector>(3, Vector()), 3,
                                             {Vector::Zero(3), Vector::Zero(2), 1});
  EkfConfig cfg;
  cfg.x0_guess = Vector::Ones(3);
  cfg.Q_w = Matrix::Identity(3, 3);
  cfg.P0 = Matrix::Identity(3, 3);
  cfg.R_v = Matrix::Identity(1, 1);
  const auto y = select_measurements(sim.measurements, {1});
  CHECK_NOTHROW(run_ekf(sys.catalog, {1}, sim.truth, y, cfg));
  EkfConfig bad = cfg;
  bad.Q_w(0, 1) = 0.5;
  CHECK_THROWS_AS(run_ekf(sys.catalog, {1}, sim.truth, y, bad), Error);
  bad = cfg;
  bad.P0(2, 2) = -1.0;
  CHECK_THROWS_AS(run_ekf(sys.catalog, {1}, sim.truth, y, bad), Error);
  bad = cfg;
  bad.R_v = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(run_ekf(sys.catalog, {1}, sim.truth, y, bad), Error);
  CHECK_THROWS_AS(run_ekf(sys.catalog, {1}, sim.truth, sim.measurements, cfg), Error);
}

TEST_CASE("a diverging filter reports the failing step") {
  const SensorCatalog cat = four_cstr_catalog();
  const Vector xs = four_cstr_steady_state();
  const int steps = 40;
  const NoisySimulation sim =
      simulate_noisy(cat, xs, std::vector<Vector>(steps, four_cstr_inputs()), steps,
                     {Vector::Zero(8), 0.01 * xs, 7});
  EkfConfig cfg;
  cfg.x0_guess = 1.6 * xs;
  cfg.Q_w = diag_sq(0.1 * xs);
  cfg.P0 = cfg.Q_w;
  cfg.R_v = diag_sq(0.1 * vec({xs[4], xs[5]}));
  try {
    run_ekf(cat, {5, 6}, sim.truth, select_measurements(sim.measurements, {5, 6}), cfg);
    MESSAGE("filter survived this guess");
  } catch (const IntegrationError& e) {
    CHECK(e.step() >= 0);
    CHECK(e.step() <= steps);
  }
}

TEST_CASE("rmse examples") {
  CHECK(rmse(run_from({vec({1, 2}), vec({3, 4})}, {vec({1, 2}), vec({3, 4})})) == 0.0);
  const Vector e = vec({3.0, 4.0});
  const EstimationRun r = run_from({vec({0, 0}), vec({1, 1}), vec({5, -2})},
                                   {e, vec({1, 1}) + e, vec({5, -2}) + e});
  CHECK(rmse(r) == doctest::Approx(e.norm() / std::sqrt(2.0)));
  CHECK(rmse(r) == rmse(r));
}

TEST_CASE("normalized error examples") {
  CHECK(mean_normalized_error(run_from({vec({1, 2})}, {vec({1, 2})})) == 0.0);
  const EstimationRun single = run_from({vec({0}), vec({0})}, {vec({1}), vec({-1})});
  CHECK(mean_normalized_error(single) == doctest::Approx(1.0));

  const EstimationRun r = run_from({vec({0, 0, 0}), vec({0, 0, 0}), vec({0, 0, 0})},
                                   {vec({1, 0.5, 0}), vec({-2, 0.1, 0}), vec({0.3, -1, 0})});
  EstimationRun scaled = r;
  for (Vector& x : scaled.estimates) x *= 7.5;
  CHECK(mean_normalized_error(scaled) == doctest::Approx(mean_normalized_error(r)).epsilon(1e-14));
  CHECK(mean_normalized_error(r) >= 0.0);
  CHECK(mean_normalized_error(r) <= std::sqrt(3.0));
}

TEST_CASE("subset comparison sorts rows and attaches degrees") {
  const SensorCatalog cat = four_cstr_catalog();
  const Vector xs = four_cstr_steady_state();
  const Vector u = four_cstr_inputs();
  const Trajectory t = simulate_constant(cat.model(), xs, u, 3);
  const SubsetEvaluator ev(cat, t, propagate_state_sensitivity(cat.model(), t), default_scales(cat, t));

  ComparisonSetup setup;
  setup.x0 = xs;
  setup.steps = 40;
  setup.inputs.assign(40, u);
  setup.process_std = 0.001 * xs;
  setup.measurement_std = 0.01 * xs;
  setup.base_seed = 2000;
  setup.runs = 4;
  setup.guess = 1.05 * xs;
  setup.tuning_state_std = 0.1 * xs;
  setup.tuning_sensor_std = 0.1 * xs;
  const std::vector<SensorSet> panel{{1, 3}, {4, 8}, {1, 8}};
  const auto rows = subset_comparison(cat, panel, setup, &ev, 1);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i - 1].mean_rmse <= rows[i].mean_rmse);
  for (const ComparisonRow& r : rows) {
    REQUIRE(r.degree.has_value());
    CHECK(*r.degree == ev.evaluate(r.subset).degree);
    CHECK(r.completed + r.failed == 4);
  }

  const auto parallel = subset_comparison(cat, panel, setup, &ev, 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(parallel[i].subset == rows[i].subset);
    CHECK(parallel[i].mean_rmse == rows[i].mean_rmse);
    CHECK(parallel[i].std_rmse == rows[i].std_rmse);
  }
}

TEST_CASE("perfect-information comparison has zero error") {
  const SensorCatalog cat = four_cstr_catalog();
  const Vector xs = four_cstr_steady_state();
  ComparisonSetup setup;
  setup.x0 = xs;
  setup.steps = 20;
  setup.inputs.assign(20, four_cstr_inputs());
  setup.process_std = Vector::Zero(8);
  setup.measurement_std = Vector::Zero(8);
  setup.runs = 1;
  setup.guess = xs;
  setup.tuning_state_std = 0.1 * xs;
  setup.tuning_sensor_std = 0.1 * xs;
  const auto rows = subset_comparison(cat, {{1, 8}}, setup);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].completed == 1);
  CHECK(rows[0].mean_rmse < 1e-9);
  CHECK_FALSE(rows[0].degree.has_value());
}

TEST_CASE("failed runs are counted, not fatal") {
  const SensorCatalog cat = four_cstr_catalog();
  const Vector xs = four_cstr_steady_state();
  ComparisonSetup setup;
  setup.x0 = xs;
  setup.steps = 40;
  setup.inputs.assign(40, four_cstr_inputs());
  setup.process_std = 0.1 * xs;
  setup.measurement_std = 0.1 * xs;
  setup.runs = 3;
  setup.guess = 1.2 * xs;
  setup.tuning_state_std = 0.1 * xs;
  setup.tuning_sensor_std = 0.1 * xs;
  const auto rows = subset_comparison(cat, {{1, 8}, {5, 6}}, setup);
  REQUIRE(rows.size() == 2);
  for (const ComparisonRow& r : rows) {
    CHECK(r.completed + r.failed == 3);
    if (r.completed == 0) {
      CHECK(std::isinf(r.mean_rmse));
      CHECK_FALSE(r.first_failure.empty());
    }
  }
}
