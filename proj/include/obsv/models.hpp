#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "obsv/dynamics.hpp"
#include "obsv/error.hpp"
#include "obsv/sensitivity.hpp"

namespace obsv {

// ---------------------------------------------------------------------------
// Four-CSTR benchmark. States [C_A1, T1, C_A2, T2, C_A3, T3, C_A4, T4],
// inputs [Q1, Q2, Q3, Q4]. Units: kmol/m^3, K, m^3/h, kJ, h.
// ---------------------------------------------------------------------------

struct FourCstrParams {
  std::array<double, 4> feed_temperature{300.0, 300.0, 300.0, 300.0};  // T0i
  std::array<double, 4> feed_concentration{4.0, 2.0, 3.0, 3.5};        // C0i
  std::array<double, 4> feed_flow{5.0, 10.0, 8.0, 12.0};               // F0i
  std::array<double, 4> volume{1.0, 3.0, 4.0, 6.0};                    // Vi
  std::array<double, 3> flow{35.0, 45.0, 33.0};                        // F1, F2, F3
  double recycle_flow_1 = 20.0;                                        // Fr1
  double recycle_flow_2 = 10.0;                                        // Fr2
  std::array<double, 3> rate_constant{3.0e6, 3.0e5, 3.0e5};            // k1..k3, 1/h
  std::array<double, 3> activation_energy{5.0e4, 7.5e4, 7.53e4};       // E1..E3, kJ/kmol
  std::array<double, 3> reaction_enthalpy{-5.0e4, -5.2e4, -5.0e4};     // dH1..dH3, kJ/kmol
  double gas_constant = 8.314;                                         // kJ/(kmol K)
  double density = 1000.0;                                             // kg/m^3
  double heat_capacity = 0.231;                                        // kJ/(kg K)
  std::array<double, 4> heat_input{1.0e4, 2.0e4, 2.5e4, 1.0e4};        // Q1..Q4, kJ/h
  double sample_time = 1.0 / 120.0;                                    // h

  void validate() const;
};

/// Reported steady state of the benchmark, used as a reference only.
inline constexpr std::array<double, 8> kReferenceSteadyState{2.78, 363.0, 2.58, 356.0,
                                                         2.6,  355.0, 2.6,  392.0};

inline constexpr std::array<const char*, 8> kFourCstrLabels{"C_A1", "T1", "C_A2", "T2",
                                                            "C_A3", "T3", "C_A4", "T4"};

/// Constant-volume mass and energy balances with three parallel Arrhenius
/// reactions. Tank 1 takes its feed plus recycles Fr1 (tank-2 effluent) and
/// Fr2 (tank-4 effluent); tank 2 takes F1 and its feed; tank 3 takes the
/// non-recycled part of tank-2 effluent (F2 - Fr1) and its feed; tank 4
/// takes F3 and its feed. Throws kDomain for a non-positive temperature.
Vector four_cstr_rhs(const Vector& x, const Vector& u, const FourCstrParams& p);

ContinuousModel four_cstr_continuous(const FourCstrParams& p = {});
DiscreteModel four_cstr_model(const FourCstrParams& p = {});
Vector four_cstr_inputs(const FourCstrParams& p = {});

/// Eight direct-state sensors in state order.
SensorCatalog four_cstr_catalog(const FourCstrParams& p = {});

/// Damped-Newton steady state of the benchmark from the reported point.
Vector four_cstr_steady_state(const FourCstrParams& p = {}, double tol = 1e-10);

/// Reactor constants plus heat inputs and sample time as a JSON document.
std::string four_cstr_manifest(const FourCstrParams& p = {});
FourCstrParams four_cstr_params_from_manifest(const std::string& json_text);

// ---------------------------------------------------------------------------

struct SteadyStateOptions {
  double tol = 1e-10;
  int max_iterations = 100;
  JacobianConfig jacobian{};
};

/// Scaled residual max_i |rhs_i(x)| / max(|x_i|, 1).
double scaled_residual(const ContinuousModel& model, const Vector& x, const Vector& u);

/// Damped Newton on rhs(x, u) = 0. Throws SteadyStateError on failure.
Vector steady_state_solve(const ContinuousModel& model, const Vector& u, const Vector& x_init,
                          const SteadyStateOptions& options = {});

class SteadyStateError : public Error {
 public:
  SteadyStateError(const std::string& message, Vector best, double residual);
  const Vector& best_iterate() const { return best_; }
  double residual() const { return residual_; }

 private:
  Vector best_;
  double residual_;
};

// ---------------------------------------------------------------------------
// Linear oracle systems x(k+1) = A x(k), y_i = c_i x.
// ---------------------------------------------------------------------------

struct LinearBenchmark {
  Matrix A;
  std::vector<Vector> sensor_rows;
  Vector x0;
  int known_min_observable_size = 0;  // 0 when no subset is observable

  DiscreteModel model() const;
  SensorCatalog catalog() const;
};

struct LinearBenchmarkSpec {
  int n_states = 4;
  int n_sensors = 6;
  double coupling_density = 0.35;
  std::uint64_t seed = 1;
};

/// Rank of [C; CA; ...; CA^(n-1)] for the rows in `subset`.
int kalman_rank(const Matrix& A, const std::vector<Vector>& rows, const SensorSet& subset,
                double relative_tol = 1e-8);
bool kalman_observable(const Matrix& A, const std::vector<Vector>& rows, const SensorSet& subset,
                       double relative_tol = 1e-8);

/// Smallest observable subset size by Kalman-rank enumeration (0 if none).
int kalman_min_observable_size(const Matrix& A, const std::vector<Vector>& rows);

/// Random sparse system with direct and two-state sum sensors; seeded.
LinearBenchmark make_linear_benchmark(const LinearBenchmarkSpec& spec);

/// Companion (observable-canonical) A with y = x1 plus `redundant` sensors on
/// the other states.
LinearBenchmark observable_canonical_benchmark(const std::vector<double>& coefficients,
                                               int redundant);

/// Block-diagonal chains, one direct sensor on the head of each chain.
LinearBenchmark decoupled_chains_benchmark(const std::vector<int>& chain_lengths);

// ---------------------------------------------------------------------------
// Synthetic large networks with composite sensors.
// ---------------------------------------------------------------------------

enum class Nonlinearity { kNone, kQuadratic, kArrhenius };

std::string to_string(Nonlinearity n);
Nonlinearity parse_nonlinearity(const std::string& text);

struct SyntheticNetworkSpec {
  int n_states = 20;
  int n_sensors = 12;
  double coupling_density = 0.2;
  Nonlinearity nonlinearity = Nonlinearity::kQuadratic;
  std::uint64_t seed = 1;
};

struct SyntheticNetwork {
  ContinuousModel continuous;
  DiscreteModel model;
  Vector x0;
  Vector u;
  SensorCatalog catalog;
  std::uint64_t seed_used = 0;
};

/// Compartment network dx/dt = b - d x + W g(x); sensors read single states or
/// sums of 2-6 states. Retries with the next seed (up to 8 times) when the
/// nominal rollout is not finite.
SyntheticNetwork make_synthetic_network(const SyntheticNetworkSpec& spec, int smoke_steps = 200);

}  // namespace obsv
