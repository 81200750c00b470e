#include "obsv/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "obsv/error.hpp"

namespace obsv {

SensorCatalog::SensorCatalog(DiscreteModel model, std::vector<SensorDef> sensors,
                             JacobianConfig fd)
    : model_(std::move(model)), sensors_(std::move(sensors)), fd_(fd) {
  fd_.validate();
  if (sensors_.empty()) fail(ErrorKind::kInvalidArgument, "sensor catalog is empty");
  for (std::size_t i = 0; i < sensors_.size(); ++i) {
    if (!sensors_[i].output) {
      fail(ErrorKind::kInvalidArgument, "sensor " + std::to_string(i + 1) + " has no output map");
    }
    sensors_[i].id = static_cast<int>(i) + 1;
    if (sensors_[i].label.empty()) sensors_[i].label = "y" + std::to_string(i + 1);
  }
}

const SensorDef& SensorCatalog::sensor(int id) const {
  if (id < 1 || id > size()) {
    fail(ErrorKind::kInvalidArgument, "sensor id " + std::to_string(id) + " out of range 1.." +
                                          std::to_string(size()));
  }
  return sensors_[static_cast<std::size_t>(id) - 1];
}

double SensorCatalog::output(int id, const Vector& x) const { return sensor(id).output(x); }

Vector SensorCatalog::gradient(int id, const Vector& x) const {
  const SensorDef& s = sensor(id);
  if (s.gradient) {
    Vector g = s.gradient(x);
    if (g.size() != x.size()) {
      fail(ErrorKind::kInvalidArgument, "gradient of sensor " + std::to_string(id) +
                                            " has wrong length");
    }
    return g;
  }
  const StateMap as_map = [&s](const Vector& at, const Vector&) {
    Vector out(1);
    out[0] = s.output(at);
    return out;
  };
  return finite_difference_jacobian(as_map, x, Vector(), fd_).row(0).transpose();
}

SensorSet SensorCatalog::all_ids() const {
  SensorSet ids(static_cast<std::size_t>(size()));
  for (int i = 0; i < size(); ++i) ids[static_cast<std::size_t>(i)] = i + 1;
  return ids;
}

void SensorCatalog::validate_subset(const SensorSet& subset) const {
  if (subset.empty()) fail(ErrorKind::kInvalidArgument, "sensor subset is empty");
  for (std::size_t i = 0; i < subset.size(); ++i) {
    if (subset[i] < 1 || subset[i] > size()) {
      fail(ErrorKind::kInvalidArgument, "sensor id " + std::to_string(subset[i]) +
                                            " out of range 1.." + std::to_string(size()));
    }
    if (i > 0 && subset[i] <= subset[i - 1]) {
      fail(ErrorKind::kInvalidArgument, "sensor subset must be strictly increasing");
    }
  }
}

SensorSet canonical(SensorSet subset) {
  std::sort(subset.begin(), subset.end());
  subset.erase(std::unique(subset.begin(), subset.end()), subset.end());
  return subset;
}

std::string format_set(const SensorSet& subset) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < subset.size(); ++i) os << (i ? "," : "") << subset[i];
  os << '}';
  return os.str();
}

std::string to_string(Normalization mode) {
  switch (mode) {
    case Normalization::kNone: return "none";
    case Normalization::kRows: return "rows";
    case Normalization::kColumns: return "columns";
    case Normalization::kBoth: return "both";
  }
  return "both";
}

Normalization parse_normalization(const std::string& text) {
  if (text == "none") return Normalization::kNone;
  if (text == "rows") return Normalization::kRows;
  if (text == "columns") return Normalization::kColumns;
  if (text == "both") return Normalization::kBoth;
  fail(ErrorKind::kInvalidArgument,
       "unknown normalization '" + text + "' (expected none|rows|columns|both)");
}

Matrix output_sensitivity_block(const SensorCatalog& catalog, const SensorSet& subset,
                                const Vector& x_k, const Matrix& state_sensitivity_k) {
  catalog.validate_subset(subset);
  const int n = catalog.n_states();
  if (state_sensitivity_k.rows() != n || state_sensitivity_k.cols() != n) {
    fail(ErrorKind::kInvalidArgument, "state sensitivity must be n x n");
  }
  Matrix block(static_cast<Eigen::Index>(subset.size()), n);
  for (std::size_t r = 0; r < subset.size(); ++r) {
    block.row(static_cast<Eigen::Index>(r)) =
        catalog.gradient(subset[r], x_k).transpose() * state_sensitivity_k;
  }
  return block;
}

StackedSensitivity build_stacked(const SensorCatalog& catalog, const SensorSet& subset,
                                 const Trajectory& traj,
                                 const std::vector<Matrix>& state_sensitivity) {
  catalog.validate_subset(subset);
  if (traj.states.size() != state_sensitivity.size()) {
    fail(ErrorKind::kInvalidArgument, "trajectory and state sensitivity lengths differ");
  }
  const auto samples = static_cast<Eigen::Index>(traj.states.size());
  const auto per_step = static_cast<Eigen::Index>(subset.size());
  StackedSensitivity out;
  out.matrix.resize(samples * per_step, catalog.n_states());
  out.rows.reserve(static_cast<std::size_t>(samples * per_step));
  for (Eigen::Index k = 0; k < samples; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    out.matrix.middleRows(k * per_step, per_step) =
        output_sensitivity_block(catalog, subset, traj.states[kk], state_sensitivity[kk]);
    for (int id : subset) out.rows.push_back({id, static_cast<int>(k)});
  }
  out.columns.resize(static_cast<std::size_t>(catalog.n_states()));
  for (int j = 0; j < catalog.n_states(); ++j) out.columns[static_cast<std::size_t>(j)] = j + 1;
  return out;
}

ScaleSet default_scales(const SensorCatalog& catalog, const Trajectory& traj, double floor) {
  if (traj.states.empty()) fail(ErrorKind::kInvalidArgument, "default_scales: empty trajectory");
  if (!(floor > 0.0)) fail(ErrorKind::kInvalidArgument, "default_scales: floor must be positive");
  ScaleSet scales;
  scales.floor = floor;
  scales.state_scales = traj.states.front().cwiseAbs().cwiseMax(floor);
  scales.output_scales = Vector::Constant(catalog.size(), floor);
  for (const Vector& x : traj.states) {
    for (int id = 1; id <= catalog.size(); ++id) {
      double& s = scales.output_scales[id - 1];
      s = std::max(s, std::abs(catalog.output(id, x)));
    }
  }
  return scales;
}

StackedSensitivity normalize(const StackedSensitivity& stacked, const ScaleSet& scales,
                             Normalization mode) {
  if (stacked.normalized) {
    fail(ErrorKind::kInvalidState, "sensitivity matrix is already normalized");
  }
  if (scales.state_scales.size() != stacked.matrix.cols()) {
    fail(ErrorKind::kInvalidArgument, "state scale length does not match column count");
  }
  if ((scales.state_scales.array() < scales.floor).any() ||
      (scales.output_scales.array() < scales.floor).any()) {
    fail(ErrorKind::kInvalidArgument, "scale entries must be >= floor");
  }
  const bool rows = mode == Normalization::kRows || mode == Normalization::kBoth;
  const bool cols = mode == Normalization::kColumns || mode == Normalization::kBoth;

  StackedSensitivity out = stacked;
  for (Eigen::Index r = 0; r < out.matrix.rows(); ++r) {
    const int id = out.rows[static_cast<std::size_t>(r)].sensor;
    if (id < 1 || id > scales.output_scales.size()) {
      fail(ErrorKind::kInvalidArgument, "row sensor id has no output scale");
    }
    const double y_scale = rows ? scales.output_scales[id - 1] : 1.0;
    for (Eigen::Index j = 0; j < out.matrix.cols(); ++j) {
      const double x_scale = cols ? scales.state_scales[j] : 1.0;
      out.matrix(r, j) = stacked.matrix(r, j) * x_scale / y_scale;
    }
  }
  out.normalized = true;
  return out;
}

int default_horizon(int n_states, int n_sensors, int cap) {
  if (n_states < 1 || n_sensors < 1 || cap < 0) {
    fail(ErrorKind::kInvalidArgument, "default_horizon: dimensions must be positive");
  }
  int k = 0;
  while ((k + 1) * n_sensors < 4 * n_states) ++k;
  return std::min(k, cap);
}

}  // namespace obsv
