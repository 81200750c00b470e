#include "obsv/selection.hpp"

#include <algorithm>
#include <string>

#include "obsv/error.hpp"
#include "obsv/parallel.hpp"

namespace obsv {

namespace {

SensorSet without(const SensorSet& set, int id) {
  SensorSet out;
  out.reserve(set.size());
  for (int s : set) {
    if (s != id) out.push_back(s);
  }
  return out;
}

CandidateResult summarize(const ObservabilityReport& report) {
  return {report.degree, report.F_total, report.rank};
}

std::vector<CandidateResult> evaluate_all(const SubsetEvaluator& evaluator,
                                          const std::vector<SensorSet>& subsets, int threads) {
  std::vector<CandidateResult> out(subsets.size());
  parallel_for(subsets.size(), threads,
               [&](std::size_t i) { out[i] = summarize(evaluator.evaluate(subsets[i])); });
  return out;
}

// Visits every size-k combination of 1..m in lexicographic order.
template <typename Fn>
void for_each_combination(int m, int k, Fn&& fn) {
  SensorSet combo(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) combo[static_cast<std::size_t>(i)] = i + 1;
  while (true) {
    fn(combo);
    int i = k - 1;
    while (i >= 0 && combo[static_cast<std::size_t>(i)] == m - k + i + 1) --i;
    if (i < 0) return;
    ++combo[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) {
      combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j) - 1] + 1;
    }
  }
}

}  // namespace

SelectionTrace backward_greedy(const SubsetEvaluator& evaluator, int threads) {
  SelectionTrace trace;
  trace.initial_set = SensorSet(static_cast<std::size_t>(evaluator.n_sensors()));
  for (int i = 0; i < evaluator.n_sensors(); ++i) {
    trace.initial_set[static_cast<std::size_t>(i)] = i + 1;
  }
  trace.initial_report = evaluator.evaluate(trace.initial_set);
  if (!(trace.initial_report.degree > 0.0)) {
    fail(ErrorKind::kPrecondition,
         "the full sensor set is not observable (rank " +
             std::to_string(trace.initial_report.rank) + " < " +
             std::to_string(evaluator.n_states()) + "); add sensors or extend the horizon");
  }

  SensorSet current = trace.initial_set;
  double current_degree = trace.initial_report.degree;
  int current_rank = trace.initial_report.rank;
  for (int step = 0;; ++step) {
    std::vector<SensorSet> subsets;
    subsets.reserve(current.size());
    for (int id : current) subsets.push_back(without(current, id));

    std::vector<CandidateResult> results;
    try {
      results = evaluate_all(evaluator, subsets, threads);
    } catch (const Error& e) {
      fail(e.kind(), "backward step " + std::to_string(step) + ": " + e.what());
    }

    RemovalStep record;
    record.step_index = step;
    std::size_t best = 0;
    for (std::size_t i = 0; i < current.size(); ++i) {
      record.candidates[current[i]] = results[i];
      if (results[i].degree > results[best].degree) best = i;
    }

    if (!(results[best].degree > 0.0)) {
      record.resulting_set = current;
      record.resulting_degree = current_degree;
      record.resulting_rank = current_rank;
      trace.steps.push_back(std::move(record));
      break;
    }

    const int removed = current[best];
    record.removed = removed;
    record.resulting_set = subsets[best];
    record.resulting_degree = results[best].degree;
    record.resulting_rank = results[best].rank;
    trace.removal_order.push_back(removed);
    current = subsets[best];
    current_degree = results[best].degree;
    current_rank = results[best].rank;
    trace.steps.push_back(std::move(record));
  }
  trace.final_set = current;
  trace.final_degree = current_degree;
  return trace;
}

std::vector<int> forward_greedy(const SubsetEvaluator& evaluator, int target_size, int threads) {
  const int m = evaluator.n_sensors();
  if (target_size < 1 || target_size > m) {
    fail(ErrorKind::kInvalidArgument,
         "forward_greedy: target size must lie in 1.." + std::to_string(m));
  }
  std::vector<int> order;
  SensorSet chosen;
  while (static_cast<int>(order.size()) < target_size) {
    std::vector<int> candidates;
    std::vector<SensorSet> subsets;
    for (int id = 1; id <= m; ++id) {
      if (std::find(chosen.begin(), chosen.end(), id) != chosen.end()) continue;
      SensorSet trial = chosen;
      trial.insert(std::upper_bound(trial.begin(), trial.end(), id), id);
      candidates.push_back(id);
      subsets.push_back(std::move(trial));
    }
    const auto results = evaluate_all(evaluator, subsets, threads);
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
      const auto& r = results[i];
      const auto& b = results[best];
      if (r.degree > b.degree || (r.degree == b.degree && r.F_total > b.F_total)) best = i;
    }
    order.push_back(candidates[best]);
    chosen = subsets[best];
  }
  return order;
}

ExhaustiveResult exhaustive_min_observable(const SubsetEvaluator& evaluator, int max_m,
                                           int threads) {
  const int m = evaluator.n_sensors();
  if (m > max_m) {
    fail(ErrorKind::kInvalidArgument, "exhaustive search refused: catalog has " +
                                          std::to_string(m) + " sensors, cap is " +
                                          std::to_string(max_m));
  }
  ExhaustiveResult result;
  for (int size = 1; size <= m; ++size) {
    std::vector<SensorSet> subsets;
    for_each_combination(m, size, [&](const SensorSet& c) { subsets.push_back(c); });
    const auto results = evaluate_all(evaluator, subsets, threads);
    result.evaluated += subsets.size();
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!(results[i].degree > 0.0)) continue;
      if (!best || results[i].degree > results[*best].degree) best = i;
    }
    if (best) {
      result.min_size = size;
      result.best_set = subsets[*best];
      result.best_degree = results[*best].degree;
      return result;
    }
  }
  fail(ErrorKind::kPrecondition, "no observable subset exists, not even the full catalog");
}

std::vector<int> augment_set(const SelectionTrace& trace, int extra) {
  const int removed = static_cast<int>(trace.removal_order.size());
  if (extra < 0 || extra > removed) {
    fail(ErrorKind::kInvalidArgument,
         "augment_set: extra must lie in 0.." + std::to_string(removed));
  }
  std::vector<int> out = trace.final_set;
  for (int i = 0; i < extra; ++i) {
    out.push_back(trace.removal_order[static_cast<std::size_t>(removed - 1 - i)]);
  }
  return out;
}

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 value = 1;
  for (int i = 1; i <= k; ++i) {
    // Exact: value * (n - k + i) is divisible by i at every step.
    value = value * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
  }
  return static_cast<std::uint64_t>(value);
}

ComplexityCounts combination_counts(int m, int o) {
  if (m < 1 || o < 1 || o > m) {
    fail(ErrorKind::kInvalidArgument, "combination_counts requires 1 <= o <= m");
  }
  if (m > 63) fail(ErrorKind::kInvalidArgument, "combination_counts supports m <= 63");
  ComplexityCounts c;
  c.m = m;
  c.o = o;
  const auto mm = static_cast<std::uint64_t>(m);
  const auto oo = static_cast<std::uint64_t>(o);
  c.removal_count = (mm - oo + 1) * (mm + oo) / 2;
  c.forward_count = oo * (2 * mm - oo + 1) / 2;
  for (int j = 1; j <= o; ++j) c.exhaustive_count += binomial(m, j);
  c.binary_count = std::uint64_t{1} << m;
  return c;
}

}  // namespace obsv
