#pragma once

#include <functional>
#include <string>
#include <vector>

#include "obsv/dynamics.hpp"

namespace obsv {

/// Sensor ids are 1-based positions in a catalog.
using SensorSet = std::vector<int>;

struct SensorDef {
  int id = 0;
  std::string label;
  std::function<double(const Vector&)> output;
  /// Row dh/dx. Optional; finite differences are used when empty.
  std::function<Vector(const Vector&)> gradient;
};

/// Ordered candidate sensors bound to the model they read. Construction
/// renumbers ids to 1..m in the given order.
class SensorCatalog {
 public:
  SensorCatalog(DiscreteModel model, std::vector<SensorDef> sensors, JacobianConfig fd = {});

  int size() const { return static_cast<int>(sensors_.size()); }
  int n_states() const { return model_.n_states; }
  const DiscreteModel& model() const { return model_; }
  const std::vector<SensorDef>& sensors() const { return sensors_; }
  const SensorDef& sensor(int id) const;

  double output(int id, const Vector& x) const;
  Vector gradient(int id, const Vector& x) const;

  /// All ids, 1..m.
  SensorSet all_ids() const;

  /// Throws unless `subset` is non-empty, strictly increasing and in range.
  void validate_subset(const SensorSet& subset) const;

 private:
  DiscreteModel model_;
  std::vector<SensorDef> sensors_;
  JacobianConfig fd_;
};

/// Sorted copy with duplicates removed.
SensorSet canonical(SensorSet subset);

std::string format_set(const SensorSet& subset);

struct ScaleSet {
  Vector state_scales;
  Vector output_scales;  // indexed by sensor id - 1
  double floor = 1e-12;
};

enum class Normalization { kNone, kRows, kColumns, kBoth };

std::string to_string(Normalization mode);
Normalization parse_normalization(const std::string& text);

struct RowTag {
  int sensor = 0;
  int time = 0;
};

/// Stacked output-to-initial-state sensitivity, rows time-major.
struct StackedSensitivity {
  Matrix matrix;
  std::vector<RowTag> rows;
  std::vector<int> columns;  // state indices, 1..n
  bool normalized = false;
};

/// (dh_i/dx at x_k) * S_x(k) for each sensor in the subset, ascending id.
Matrix output_sensitivity_block(const SensorCatalog& catalog, const SensorSet& subset,
                                const Vector& x_k, const Matrix& state_sensitivity_k);

StackedSensitivity build_stacked(const SensorCatalog& catalog, const SensorSet& subset,
                                 const Trajectory& traj,
                                 const std::vector<Matrix>& state_sensitivity);

/// state_scales[j] = max(|x_j(0)|, floor); output_scales[i] = max(max_k |h_i(x(k))|, floor).
ScaleSet default_scales(const SensorCatalog& catalog, const Trajectory& traj,
                        double floor = 1e-12);

/// Entry (i, k, j) becomes s * state_scales[j] / output_scales[i]; `mode`
/// selects which factor is applied. Throws kInvalidState if already normalized.
StackedSensitivity normalize(const StackedSensitivity& stacked, const ScaleSet& scales,
                             Normalization mode = Normalization::kBoth);

/// Smallest K with (K + 1) * m >= 4 n, capped at `cap`.
int default_horizon(int n_states, int n_sensors, int cap = 200);

}  // namespace obsv
