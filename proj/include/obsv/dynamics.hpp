#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace obsv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Maps (state, input) to a vector of the state dimension.
using StateMap = std::function<Vector(const Vector& x, const Vector& u)>;

/// x(k+1) = transition(x(k), u(k)). `dt` is informational only.
struct DiscreteModel {
  int n_states = 0;
  int n_inputs = 0;
  StateMap transition;
  double dt = 1.0;
  /// d transition / dx. Optional; finite differences are used when empty.
  std::function<Matrix(const Vector& x, const Vector& u)> jacobian;
};

/// dx/dt = rhs(x, u).
struct ContinuousModel {
  int n_states = 0;
  int n_inputs = 0;
  StateMap rhs;
};

struct Trajectory {
  std::vector<Vector> states;  // k = 0..K
  std::vector<Vector> inputs;  // k = 0..K-1

  int horizon() const { return static_cast<int>(states.size()) - 1; }
};

struct JacobianConfig {
  double relative_step = 1e-6;
  double absolute_floor = 1e-9;

  void validate() const;
};

/// Classical RK4 with the input held over the step. The returned transition
/// throws IntegrationError if any stage evaluation is non-finite.
DiscreteModel rk4_discretize(const ContinuousModel& model, double dt);

/// Deterministic rollout: states[0] = x0, states[k+1] = f(states[k], inputs[k]).
Trajectory simulate(const DiscreteModel& model, const Vector& x0,
                    const std::vector<Vector>& inputs, int steps);

/// Constant-input rollout.
Trajectory simulate_constant(const DiscreteModel& model, const Vector& x0, const Vector& u,
                             int steps);

/// Central finite-difference Jacobian of an arbitrary map with respect to x.
/// Column j uses h_j = max(relative_step * |x_j|, absolute_floor).
Matrix finite_difference_jacobian(const StateMap& map, const Vector& x, const Vector& u,
                                  const JacobianConfig& cfg);

/// d transition / dx at (x, u).
Matrix jacobian_state(const DiscreteModel& model, const Vector& x, const Vector& u,
                      const JacobianConfig& cfg = {});

/// S_x(k) = dx(k)/dx(0) along `traj`, k = 0..K, by the chain rule
/// S_x(k+1) = J(x(k), u(k)) S_x(k) with S_x(0) = I.
std::vector<Matrix> propagate_state_sensitivity(const DiscreteModel& model,
                                                const Trajectory& traj,
                                                const JacobianConfig& cfg = {});

bool all_finite(const Vector& v);

}  // namespace obsv
