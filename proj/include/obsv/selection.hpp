#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "obsv/observability.hpp"

namespace obsv {

struct CandidateResult {
  double degree = 0.0;
  double F_total = 0.0;
  int rank = 0;
};

struct RemovalStep {
  int step_index = 0;
  /// Keyed by the removed sensor id; values describe the remaining set.
  std::map<int, CandidateResult> candidates;
  std::optional<int> removed;
  SensorSet resulting_set;
  double resulting_degree = 0.0;
  int resulting_rank = 0;
};

struct SelectionTrace {
  SensorSet initial_set;
  ObservabilityReport initial_report;
  std::vector<RemovalStep> steps;  // last step has no removal
  SensorSet final_set;
  double final_degree = 0.0;
  std::vector<int> removal_order;
};

/// Backward elimination: repeatedly drop the sensor whose removal leaves the
/// largest degree (lowest id on ties) until every single removal leaves an
/// unobservable set. Candidate evaluations fan out over `threads` workers.
SelectionTrace backward_greedy(const SubsetEvaluator& evaluator, int threads = 1);

/// Forward selection baseline: add the sensor maximizing (degree, F_total),
/// lowest id on ties, until `target_size` sensors are chosen.
std::vector<int> forward_greedy(const SubsetEvaluator& evaluator, int target_size,
                                int threads = 1);

struct ExhaustiveResult {
  int min_size = 0;
  SensorSet best_set;
  double best_degree = 0.0;
  std::uint64_t evaluated = 0;
};

/// Enumerates subsets by increasing size; within the first size that has an
/// observable subset, returns the maximum-degree one (lexicographically
/// smallest on ties). Refuses catalogs larger than `max_m`.
ExhaustiveResult exhaustive_min_observable(const SubsetEvaluator& evaluator, int max_m = 16,
                                           int threads = 1);

/// Final set plus the last `extra` removed sensors, re-added in reverse
/// removal order. The returned vector lists the final set first (ascending)
/// followed by the re-added sensors in the order they are added.
std::vector<int> augment_set(const SelectionTrace& trace, int extra);

struct ComplexityCounts {
  int m = 0;
  int o = 0;
  std::uint64_t removal_count = 0;
  std::uint64_t forward_count = 0;
  std::uint64_t exhaustive_count = 0;
  std::uint64_t binary_count = 0;
};

ComplexityCounts combination_counts(int m, int o);

std::uint64_t binomial(int n, int k);

}  // namespace obsv
