#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "obsv/cli/config.hpp"
#include "obsv/observability.hpp"
#include "obsv/sensitivity.hpp"

namespace obsv::cli {

/// Model, nominal trajectory and evaluator assembled from a config.
struct Problem {
  std::string description;
  std::shared_ptr<const SensorCatalog> catalog;
  Vector x0;
  Vector u;
  Trajectory trajectory;
  std::vector<Matrix> state_sensitivity;
  std::shared_ptr<const SubsetEvaluator> evaluator;
};

Problem build_problem(const RunConfig& config);

/// File name -> contents. Deterministic files only; timing.json carries the
/// wall-clock and thread count.
using Bundle = std::map<std::string, std::string>;

Bundle build_select_bundle(const RunConfig& config, int threads);
Bundle build_estimate_bundle(const RunConfig& config, int threads);
Bundle build_bench_bundle(const RunConfig& config, int threads);

/// Writes every file to `dir` through a temporary name and a rename.
void write_bundle(const Bundle& bundle, const std::filesystem::path& dir);

/// 2 config error, 3 unobservable initial set, 4 numeric failure.
int exit_code_for(const std::exception& e);

std::string version();

int cmd_select(const RunConfig& config, int threads = 1);
int cmd_estimate(const RunConfig& config, int threads = 1);
int cmd_bench(const RunConfig& config, int threads = 1);

/// Sets the spdlog level from OBSV_LOG (trace|debug|info|warn|error|off).
void init_logging();

}  // namespace obsv::cli
