#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsv/models.hpp"
#include "obsv/sensitivity.hpp"

namespace obsv::cli {

enum class Strategy { kBackward, kForward, kExhaustive };

std::string to_string(Strategy s);

struct ModelConfig {
  std::string kind = "four-cstr";  // four-cstr | manifest | linear-benchmark | synthetic
  std::string path;                // manifest only, resolved against the config file
  int n_states = 4;
  int n_sensors = 6;
  double coupling_density = 0.35;
  Nonlinearity nonlinearity = Nonlinearity::kQuadratic;
  std::uint64_t seed = 1;
};

struct NoiseConfig {
  double process_fraction = 0.001;
  double measurement_fraction = 0.01;
};

struct EstimationConfig {
  int steps = 40;
  int runs = 10;
  double guess_factor = 1.05;
  double tuning_fraction = 0.1;
  /// Explicit subsets; empty means every observable pair.
  std::vector<SensorSet> panel;
};

struct BenchConfig {
  std::vector<int> sizes{4, 6, 8, 10};
  std::vector<Strategy> strategies{Strategy::kBackward, Strategy::kForward, Strategy::kExhaustive};
  std::vector<std::pair<int, int>> count_pairs{{8, 2}, {16, 10}};
};

struct RunConfig {
  ModelConfig model;
  std::optional<int> horizon;
  Normalization normalization = Normalization::kBoth;
  double rank_tolerance = 1e-8;
  Strategy strategy = Strategy::kBackward;
  int target_size = 0;  // forward strategy; 0 means the backward-greedy size
  int exhaustive_cap = 16;
  std::uint64_t seed = 1;
  NoiseConfig noise;
  EstimationConfig estimation;
  BenchConfig bench;
  std::string output_dir = "obsv-out";
};

/// Parses and validates a JSON document. Unknown keys, wrong types and
/// out-of-range values throw Error(kConfig). Relative manifest paths are
/// resolved against `base_dir`.
RunConfig parse_config_json(const nlohmann::json& doc,
                            const std::filesystem::path& base_dir = {});

/// Reads a .json or .toml file (by extension).
RunConfig load_config(const std::filesystem::path& path);

/// Parses TOML text into the equivalent JSON document.
nlohmann::json toml_to_json(const std::string& text, const std::string& source = "config");

/// Complete echo with every default filled in; parse_config_json(to_json(c))
/// reproduces `c`.
nlohmann::ordered_json to_json(const RunConfig& config);

}  // namespace obsv::cli
