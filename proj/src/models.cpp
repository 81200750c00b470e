#include "obsv/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <json.hpp>

#include "obsv/error.hpp"
#include "obsv/observability.hpp"

namespace obsv {

// --------------------------------------------------------------- four CSTR

void FourCstrParams::validate() const {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  bool ok = positive(recycle_flow_1) && positive(recycle_flow_2) && positive(gas_constant) &&
            positive(density) && positive(heat_capacity) && positive(sample_time);
  for (double v : volume) ok = ok && positive(v);
  for (double v : feed_flow) ok = ok && positive(v);
  for (double v : flow) ok = ok && positive(v);
  for (double v : rate_constant) ok = ok && positive(v);
  for (double v : feed_temperature) ok = ok && positive(v);
  if (!ok) fail(ErrorKind::kInvalidArgument, "four-CSTR volumes, flows and rate constants must be positive");
  if (!(flow[1] > recycle_flow_1)) {
    fail(ErrorKind::kInvalidArgument, "F2 must exceed the recycle Fr1 it supplies");
  }
}

Vector four_cstr_rhs(const Vector& x, const Vector& u, const FourCstrParams& p) {
  if (x.size() != 8 || u.size() != 4) {
    fail(ErrorKind::kInvalidArgument, "four-CSTR expects 8 states and 4 inputs");
  }
  struct Stream {
    double flow;
    double concentration;
    double temperature;
  };
  const double c1 = x[0], t1 = x[1], c2 = x[2], t2 = x[3];
  const double c3 = x[4], t3 = x[5], t4 = x[7];
  const double c4 = x[6];
  const std::array<std::array<Stream, 3>, 4> inflows{{
      {{{p.feed_flow[0], p.feed_concentration[0], p.feed_temperature[0]},
        {p.recycle_flow_1, c2, t2},
        {p.recycle_flow_2, c4, t4}}},
      {{{p.flow[0], c1, t1}, {p.feed_flow[1], p.feed_concentration[1], p.feed_temperature[1]},
        {0.0, 0.0, 0.0}}},
      {{{p.flow[1] - p.recycle_flow_1, c2, t2},
        {p.feed_flow[2], p.feed_concentration[2], p.feed_temperature[2]},
        {0.0, 0.0, 0.0}}},
      {{{p.flow[2], c3, t3}, {p.feed_flow[3], p.feed_concentration[3], p.feed_temperature[3]},
        {0.0, 0.0, 0.0}}},
  }};
  const double rho_cp = p.density * p.heat_capacity;

  Vector dx(8);
  for (int i = 0; i < 4; ++i) {
    const double c = x[2 * i];
    const double t = x[2 * i + 1];
    if (!(t > 0.0)) {
      fail(ErrorKind::kDomain, "non-positive temperature T" + std::to_string(i + 1) + " = " +
                                   std::to_string(t));
    }
    const double v = p.volume[static_cast<std::size_t>(i)];
    double dc = 0.0;
    double dt = 0.0;
    for (const Stream& s : inflows[static_cast<std::size_t>(i)]) {
      dc += s.flow / v * (s.concentration - c);
      dt += s.flow / v * (s.temperature - t);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      const double rate =
          p.rate_constant[j] * std::exp(-p.activation_energy[j] / (p.gas_constant * t)) * c;
      dc -= rate;
      dt += -p.reaction_enthalpy[j] / rho_cp * rate;
    }
    dt += u[i] / (rho_cp * v);
    dx[2 * i] = dc;
    dx[2 * i + 1] = dt;
  }
  return dx;
}

ContinuousModel four_cstr_continuous(const FourCstrParams& p) {
  p.validate();
  ContinuousModel m;
  m.n_states = 8;
  m.n_inputs = 4;
  m.rhs = [p](const Vector& x, const Vector& u) { return four_cstr_rhs(x, u, p); };
  return m;
}

DiscreteModel four_cstr_model(const FourCstrParams& p) {
  return rk4_discretize(four_cstr_continuous(p), p.sample_time);
}

Vector four_cstr_inputs(const FourCstrParams& p) {
  return Eigen::Map<const Vector>(p.heat_input.data(), 4);
}

SensorCatalog four_cstr_catalog(const FourCstrParams& p) {
  std::vector<SensorDef> sensors;
  for (int j = 0; j < 8; ++j) {
    SensorDef s;
    s.label = kFourCstrLabels[static_cast<std::size_t>(j)];
    s.output = [j](const Vector& x) { return x[j]; };
    s.gradient = [j](const Vector& x) {
      Vector g = Vector::Zero(x.size());
      g[j] = 1.0;
      return g;
    };
    sensors.push_back(std::move(s));
  }
  return SensorCatalog(four_cstr_model(p), std::move(sensors));
}

Vector four_cstr_steady_state(const FourCstrParams& p, double tol) {
  SteadyStateOptions options;
  options.tol = tol;
  return steady_state_solve(four_cstr_continuous(p), four_cstr_inputs(p),
                            Eigen::Map<const Vector>(kReferenceSteadyState.data(), 8), options);
}

std::string four_cstr_manifest(const FourCstrParams& p) {
  nlohmann::ordered_json j;
  j["model"] = "four-cstr";
  j["units"] = {{"concentration", "kmol/m^3"}, {"temperature", "K"}, {"flow", "m^3/h"},
                {"energy", "kJ"},              {"time", "h"}};
  j["T0"] = p.feed_temperature;
  j["C0"] = p.feed_concentration;
  j["F0"] = p.feed_flow;
  j["V"] = p.volume;
  j["F"] = p.flow;
  j["Fr1"] = p.recycle_flow_1;
  j["Fr2"] = p.recycle_flow_2;
  j["k"] = p.rate_constant;
  j["E"] = p.activation_energy;
  j["dH"] = p.reaction_enthalpy;
  j["R"] = p.gas_constant;
  j["rho"] = p.density;
  j["cp"] = p.heat_capacity;
  j["Q"] = p.heat_input;
  j["dt"] = p.sample_time;
  j["notes"] = {
      "E2 = 7.5e4 and E3 = 7.53e4 are nearly equal; reactions 2 and 3 are hard to distinguish.",
      "Recycle Fr2 carries tank-4 effluent composition and temperature."};
  return j.dump(2) + "\n";
}

FourCstrParams four_cstr_params_from_manifest(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("manifest is not valid JSON: ") + e.what());
  }
  FourCstrParams p;
  try {
    if (j.value("model", std::string("four-cstr")) != "four-cstr") {
      fail(ErrorKind::kConfig, "manifest model must be four-cstr");
    }
    static const std::vector<std::string> known{"model", "units", "T0", "C0", "F0", "V",  "F",
                                                "Fr1",   "Fr2",   "k",  "E",  "dH", "R",  "rho",
                                                "cp",    "Q",     "dt", "notes"};
    for (const auto& item : j.items()) {
      if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
        fail(ErrorKind::kConfig, "unknown manifest key '" + item.key() + "'");
      }
    }
    auto read = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    read("T0", p.feed_temperature);
    read("C0", p.feed_concentration);
    read("F0", p.feed_flow);
    read("V", p.volume);
    read("F", p.flow);
    read("Fr1", p.recycle_flow_1);
    read("Fr2", p.recycle_flow_2);
    read("k", p.rate_constant);
    read("E", p.activation_energy);
    read("dH", p.reaction_enthalpy);
    read("R", p.gas_constant);
    read("rho", p.density);
    read("cp", p.heat_capacity);
    read("Q", p.heat_input);
    read("dt", p.sample_time);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("malformed manifest: ") + e.what());
  }
  p.validate();
  return p;
}

// ------------------------------------------------------------ steady state

SteadyStateError::SteadyStateError(const std::string& message, Vector best, double residual)
    : Error(ErrorKind::kConvergence, message), best_(std::move(best)), residual_(residual) {}

double scaled_residual(const ContinuousModel& model, const Vector& x, const Vector& u) {
  const Vector r = model.rhs(x, u);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    worst = std::max(worst, std::abs(r[i]) / std::max(std::abs(x[i]), 1.0));
  }
  return std::isfinite(worst) ? worst : std::numeric_limits<double>::infinity();
}

Vector steady_state_solve(const ContinuousModel& model, const Vector& u, const Vector& x_init,
                          const SteadyStateOptions& options) {
  if (x_init.size() != model.n_states) {
    fail(ErrorKind::kInvalidArgument, "steady_state_solve: initial guess has wrong length");
  }
  auto residual_at = [&](const Vector& x) {
    try {
      return scaled_residual(model, x, u);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  Vector x = x_init;
  double res = residual_at(x);
  if (!std::isfinite(res)) {
    throw SteadyStateError("initial guess outside the admissible domain", x, res);
  }
  for (int it = 0; it < options.max_iterations && res >= options.tol; ++it) {
    const Matrix jac = finite_difference_jacobian(model.rhs, x, u, options.jacobian);
    const Vector step = jac.fullPivLu().solve(-model.rhs(x, u));
    if (!step.allFinite()) {
      throw SteadyStateError("singular Jacobian at iteration " + std::to_string(it), x, res);
    }
    double lambda = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, lambda *= 0.5) {
      const Vector trial = x + lambda * step;
      const double trial_res = residual_at(trial);
      if (trial_res < res) {
        x = trial;
        res = trial_res;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  if (!(res < options.tol)) {
    throw SteadyStateError("steady state did not converge; scaled residual " + std::to_string(res),
                           x, res);
  }
  return x;
}

// ------------------------------------------------------------------ linear

DiscreteModel LinearBenchmark::model() const {
  DiscreteModel m;
  m.n_states = static_cast<int>(A.rows());
  m.n_inputs = 0;
  m.transition = [A = A](const Vector& x, const Vector&) -> Vector { return A * x; };
  m.jacobian = [A = A](const Vector&, const Vector&) -> Matrix { return A; };
  return m;
}

SensorCatalog LinearBenchmark::catalog() const {
  std::vector<SensorDef> sensors;
  for (const Vector& c : sensor_rows) {
    SensorDef s;
    s.output = [c](const Vector& x) { return c.dot(x); };
    s.gradient = [c](const Vector&) { return c; };
    sensors.push_back(std::move(s));
  }
  return SensorCatalog(model(), std::move(sensors));
}

int kalman_rank(const Matrix& A, const std::vector<Vector>& rows, const SensorSet& subset,
                double relative_tol) {
  const Eigen::Index n = A.rows();
  const auto p = static_cast<Eigen::Index>(subset.size());
  if (p == 0) return 0;
  Matrix obs(n * p, n);
  Matrix power = Matrix::Identity(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index r = 0; r < p; ++r) {
      obs.row(k * p + r) = rows[static_cast<std::size_t>(subset[static_cast<std::size_t>(r)] - 1)]
                               .transpose() *
                           power;
    }
    power = A * power;
  }
  RankPolicy policy;
  policy.relative_tol = relative_tol;
  return svd_rank(obs, policy).rank;
}

bool kalman_observable(const Matrix& A, const std::vector<Vector>& rows, const SensorSet& subset,
                       double relative_tol) {
  return kalman_rank(A, rows, subset, relative_tol) == A.rows();
}

int kalman_min_observable_size(const Matrix& A, const std::vector<Vector>& rows) {
  const int m = static_cast<int>(rows.size());
  int best = 0;
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    SensorSet subset;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) subset.push_back(i + 1);
    }
    const int size = static_cast<int>(subset.size());
    if (best != 0 && size >= best) continue;
    if (kalman_observable(A, rows, subset)) best = size;
  }
  return best;
}

LinearBenchmark make_linear_benchmark(const LinearBenchmarkSpec& spec) {
  if (spec.n_states < 1 || spec.n_sensors < 1 || spec.n_sensors > 20) {
    fail(ErrorKind::kInvalidArgument, "linear benchmark needs n >= 1 and 1 <= m <= 20");
  }
  if (!(spec.coupling_density > 0.0 && spec.coupling_density <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "coupling density must lie in (0, 1]");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = spec.n_states;

  LinearBenchmark b;
  b.A = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    b.A(i, i) = 0.3 + 0.6 * unit(rng);
    for (int j = 0; j < n; ++j) {
      if (i == j || unit(rng) >= spec.coupling_density) continue;
      const double magnitude = 0.3 + 0.5 * unit(rng);
      b.A(i, j) = unit(rng) < 0.5 ? -magnitude : magnitude;
    }
  }
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int s = 0; s < spec.n_sensors; ++s) {
    Vector c = Vector::Zero(n);
    c[pick(rng)] = 1.0;
    if (n > 1 && unit(rng) < 0.3) {
      int other = pick(rng);
      while (c[other] != 0.0) other = pick(rng);
      c[other] = 1.0;
    }
    b.sensor_rows.push_back(std::move(c));
  }
  b.x0 = Vector(n);
  for (int i = 0; i < n; ++i) b.x0[i] = 0.5 + unit(rng);
  b.known_min_observable_size = kalman_min_observable_size(b.A, b.sensor_rows);
  return b;
}

LinearBenchmark observable_canonical_benchmark(const std::vector<double>& coefficients,
                                               int redundant) {
  const int n = static_cast<int>(coefficients.size());
  if (n < 1 || redundant < 0 || redundant > n - 1) {
    fail(ErrorKind::kInvalidArgument, "observable_canonical_benchmark: bad dimensions");
  }
  LinearBenchmark b;
  // Observable canonical form: A = [a | I_(n-1); a_n | 0], y = x1.
  b.A = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    b.A(i, 0) = coefficients[static_cast<std::size_t>(i)];
    if (i + 1 < n) b.A(i, i + 1) = 1.0;
  }
  b.sensor_rows.push_back(Vector::Unit(n, 0));
  for (int r = 0; r < redundant; ++r) b.sensor_rows.push_back(Vector::Unit(n, r + 1));
  b.x0 = Vector::LinSpaced(n, 1.0, 2.0);
  b.known_min_observable_size = kalman_min_observable_size(b.A, b.sensor_rows);
  return b;
}

LinearBenchmark decoupled_chains_benchmark(const std::vector<int>& chain_lengths) {
  int n = 0;
  for (int len : chain_lengths) {
    if (len < 1) fail(ErrorKind::kInvalidArgument, "chain lengths must be positive");
    n += len;
  }
  LinearBenchmark b;
  b.A = Matrix::Zero(n, n);
  int offset = 0;
  for (std::size_t c = 0; c < chain_lengths.size(); ++c) {
    const int len = chain_lengths[c];
    for (int i = 0; i < len; ++i) {
      b.A(offset + i, offset + i) = 0.5 + 0.1 * static_cast<double>(c) + 0.07 * i;
      // Each state drives the one before it, so the chain head sees the tail.
      if (i + 1 < len) b.A(offset + i, offset + i + 1) = 0.6;
    }
    b.sensor_rows.push_back(Vector::Unit(n, offset));
    offset += len;
  }
  b.x0 = Vector::LinSpaced(n, 1.0, 2.0);
  b.known_min_observable_size = kalman_min_observable_size(b.A, b.sensor_rows);
  return b;
}

// --------------------------------------------------------------- synthetic

std::string to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::kNone: return "none";
    case Nonlinearity::kQuadratic: return "quadratic";
    case Nonlinearity::kArrhenius: return "arrhenius";
  }
  return "none";
}

Nonlinearity parse_nonlinearity(const std::string& text) {
  if (text == "none") return Nonlinearity::kNone;
  if (text == "quadratic") return Nonlinearity::kQuadratic;
  if (text == "arrhenius" || text == "arrhenius-like") return Nonlinearity::kArrhenius;
  fail(ErrorKind::kInvalidArgument,
       "unknown nonlinearity '" + text + "' (expected none|quadratic|arrhenius)");
}

namespace {

SyntheticNetwork build_network(const SyntheticNetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = spec.n_states;

  Matrix coupling = Matrix::Zero(n, n);
  Vector decay(n);
  Vector source(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      // Ring edges keep the network connected; extra edges follow the density.
      const bool ring = j == (i + n - 1) % n && n > 1;
      if (i != j && (ring || unit(rng) < spec.coupling_density)) {
        coupling(i, j) = 0.2 + 0.6 * unit(rng);
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    decay[i] = 1.0 + coupling.col(i).sum() + 0.5 * unit(rng);
    source[i] = 0.5 + unit(rng);
  }

  const Nonlinearity kind = spec.nonlinearity;
  auto shape = [kind](double v) {
    switch (kind) {
      case Nonlinearity::kNone: return v;
      case Nonlinearity::kQuadratic: return v + 0.1 * v * v;
      case Nonlinearity::kArrhenius: return v * std::exp(-1.0 / (1.0 + std::abs(v)));
    }
    return v;
  };

  ContinuousModel cont;
  cont.n_states = n;
  cont.n_inputs = 0;
  cont.rhs = [coupling, decay, source, shape](const Vector& x, const Vector&) -> Vector {
    Vector g = x.unaryExpr(shape);
    return source - decay.cwiseProduct(x) + coupling * g;
  };

  std::vector<SensorDef> sensors;
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::uniform_int_distribution<int> width(2, std::min(6, std::max(n, 2)));
  for (int s = 0; s < spec.n_sensors; ++s) {
    Vector c = Vector::Zero(n);
    if (s % 2 == 0 || n == 1) {
      c[(s / 2 * 7 + pick(rng)) % n] = 1.0;
    } else {
      const int terms = std::min(width(rng), n);
      int placed = 0;
      while (placed < terms) {
        const int idx = pick(rng);
        if (c[idx] == 0.0) {
          c[idx] = 1.0;
          ++placed;
        }
      }
    }
    SensorDef def;
    def.label = (c.sum() > 1.0 ? "sum" : "x") + std::to_string(s + 1);
    def.output = [c](const Vector& x) { return c.dot(x); };
    def.gradient = [c](const Vector&) { return c; };
    sensors.push_back(std::move(def));
  }

  DiscreteModel disc = rk4_discretize(cont, 0.1);
  Vector x0 = Vector::Ones(n);
  return SyntheticNetwork{cont, disc, x0, Vector(), SensorCatalog(disc, std::move(sensors)), seed};
}

}  // namespace

SyntheticNetwork make_synthetic_network(const SyntheticNetworkSpec& spec, int smoke_steps) {
  if (spec.n_states < 1 || spec.n_sensors < 1) {
    fail(ErrorKind::kInvalidArgument, "synthetic network needs positive dimensions");
  }
  if (!(spec.coupling_density > 0.0 && spec.coupling_density <= 1.0)) {
    fail(ErrorKind::kInvalidArgument, "coupling density must lie in (0, 1]");
  }
  std::string last_error;
  for (int attempt = 0; attempt < 8; ++attempt) {
    SyntheticNetwork net = build_network(spec, spec.seed + static_cast<std::uint64_t>(attempt));
    try {
      simulate_constant(net.model, net.x0, net.u, smoke_steps);
      return net;
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  fail(ErrorKind::kNumericFailure, "synthetic network failed its smoke test: " + last_error);
}

}  // namespace obsv
