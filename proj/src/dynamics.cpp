#include "obsv/dynamics.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "obsv/error.hpp"

namespace obsv {

namespace {

std::string describe(const Vector& x) {
  std::ostringstream os;
  os << '[';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ']';
  return os.str();
}

void check_dims(const DiscreteModel& model, const Vector& x, const Vector& u) {
  if (x.size() != model.n_states) {
    fail(ErrorKind::kInvalidArgument, "state has length " + std::to_string(x.size()) +
                                          ", model expects " + std::to_string(model.n_states));
  }
  if (u.size() != model.n_inputs) {
    fail(ErrorKind::kInvalidArgument, "input has length " + std::to_string(u.size()) +
                                          ", model expects " + std::to_string(model.n_inputs));
  }
}

}  // namespace

bool all_finite(const Vector& v) { return v.allFinite(); }

void JacobianConfig::validate() const {
  if (!(relative_step > 0.0) || !(absolute_floor > 0.0)) {
    fail(ErrorKind::kInvalidArgument, "JacobianConfig steps must be strictly positive");
  }
}

DiscreteModel rk4_discretize(const ContinuousModel& model, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    fail(ErrorKind::kInvalidArgument, "rk4_discretize: dt must be positive and finite");
  }
  if (!model.rhs) fail(ErrorKind::kInvalidArgument, "rk4_discretize: empty rhs");

  auto rhs = model.rhs;
  const int n = model.n_states;
  DiscreteModel out;
  out.n_states = n;
  out.n_inputs = model.n_inputs;
  out.dt = dt;
  out.transition = [rhs, dt, n](const Vector& x, const Vector& u) -> Vector {
    auto stage = [&](const Vector& at, int index) {
      Vector d = rhs(at, u);
      if (d.size() != n) {
        fail(ErrorKind::kInvalidArgument, "rhs returned length " + std::to_string(d.size()));
      }
      if (!d.allFinite()) {
        throw IntegrationError("non-finite rhs in RK4 stage " + std::to_string(index) +
                               " at state " + describe(at));
      }
      return d;
    };
    const Vector k1 = stage(x, 1);
    const Vector k2 = stage(x + 0.5 * dt * k1, 2);
    const Vector k3 = stage(x + 0.5 * dt * k2, 3);
    const Vector k4 = stage(x + dt * k3, 4);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  };
  return out;
}

Trajectory simulate(const DiscreteModel& model, const Vector& x0,
                    const std::vector<Vector>& inputs, int steps) {
  if (steps < 0) fail(ErrorKind::kInvalidArgument, "simulate: negative step count");
  if (static_cast<int>(inputs.size()) < steps) {
    fail(ErrorKind::kInvalidArgument, "simulate: fewer inputs than steps");
  }
  if (x0.size() != model.n_states) {
    fail(ErrorKind::kInvalidArgument, "simulate: initial state has wrong length");
  }

  Trajectory traj;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.inputs.assign(inputs.begin(), inputs.begin() + steps);
  traj.states.push_back(x0);
  for (int k = 0; k < steps; ++k) {
    const Vector& x = traj.states.back();
    check_dims(model, x, traj.inputs[k]);
    Vector next;
    try {
      next = model.transition(x, traj.inputs[k]);
    } catch (const IntegrationError& e) {
      throw IntegrationError(e.what(), k);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kDomain) throw IntegrationError(e.what(), k);
      throw;
    }
    if (!next.allFinite()) {
      throw IntegrationError("non-finite state after transition from " + describe(x), k);
    }
    traj.states.push_back(std::move(next));
  }
  return traj;
}

Trajectory simulate_constant(const DiscreteModel& model, const Vector& x0, const Vector& u,
                             int steps) {
  return simulate(model, x0, std::vector<Vector>(static_cast<std::size_t>(std::max(steps, 0)), u),
                  steps);
}

Matrix finite_difference_jacobian(const StateMap& map, const Vector& x, const Vector& u,
                                  const JacobianConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = x.size();
  Matrix jac;
  Vector xp = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double h = std::max(cfg.relative_step * std::abs(x[j]), cfg.absolute_floor);
    xp[j] = x[j] + h;
    Vector plus;
    Vector minus;
    try {
      plus = map(xp, u);
      xp[j] = x[j] - h;
      minus = map(xp, u);
    } catch (const Error& e) {
      fail(ErrorKind::kNumericFailure,
           "Jacobian column " + std::to_string(j) + " failed: " + e.what());
    }
    xp[j] = x[j];
    if (!plus.allFinite() || !minus.allFinite()) {
      fail(ErrorKind::kNumericFailure,
           "Jacobian column " + std::to_string(j) + ": non-finite perturbed evaluation");
    }
    if (jac.size() == 0) jac.resize(plus.size(), n);
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

Matrix jacobian_state(const DiscreteModel& model, const Vector& x, const Vector& u,
                      const JacobianConfig& cfg) {
  check_dims(model, x, u);
  if (model.jacobian) return model.jacobian(x, u);
  return finite_difference_jacobian(model.transition, x, u, cfg);
}

std::vector<Matrix> propagate_state_sensitivity(const DiscreteModel& model,
                                                const Trajectory& traj,
                                                const JacobianConfig& cfg) {
  if (traj.states.empty()) fail(ErrorKind::kInvalidArgument, "empty trajectory");
  if (traj.states.size() != traj.inputs.size() + 1) {
    fail(ErrorKind::kInvalidArgument, "trajectory states/inputs length mismatch");
  }
  std::vector<Matrix> sens;
  sens.reserve(traj.states.size());
  sens.push_back(Matrix::Identity(model.n_states, model.n_states));
  for (std::size_t k = 0; k < traj.inputs.size(); ++k) {
    const Matrix jac = jacobian_state(model, traj.states[k], traj.inputs[k], cfg);
    sens.push_back(jac * sens.back());
  }
  return sens;
}

}  // namespace obsv
