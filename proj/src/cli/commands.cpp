#include "obsv/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "obsv/error.hpp"
#include "obsv/estimation.hpp"
#include "obsv/models.hpp"
#include "obsv/selection.hpp"

#ifndef OBSV_VERSION
#define OBSV_VERSION "0.0.0-unknown"
#endif

namespace obsv::cli {

namespace {

using ojson = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

std::string current_stage = "setup";

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\n";
}

std::string dump(const ojson& j) { return j.dump(2) + "\n"; }

ojson vec_json(const Vector& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ojson report_json(const SensorSet& set, const ObservabilityReport& r) {
  ojson j;
  j["set"] = set;
  j["rank"] = r.rank;
  j["alpha"] = r.alpha;
  j["degree"] = r.degree;
  j["F_total"] = r.F_total;
  j["F_values"] = r.F_values;
  j["column_order"] = r.column_order;
  j["singular_values"] = vec_json(r.singular_values);
  return j;
}

std::vector<std::string> labels_for(const SensorCatalog& catalog, const SensorSet& set) {
  std::vector<std::string> out;
  for (int id : set) out.push_back(catalog.sensor(id).label);
  return out;
}

ojson metadata(const RunConfig& config, const std::string& command) {
  ojson j;
  j["tool"] = "obsv";
  j["version"] = version();
  j["command"] = command;
  ojson echo = to_json(config);
  echo.erase("output_dir");
  j["config"] = echo;
  return j;
}

SensorCatalog make_catalog(const RunConfig& config, Vector& x0, Vector& u, std::string& desc) {
  const ModelConfig& m = config.model;
  if (m.kind == "four-cstr" || m.kind == "manifest") {
    FourCstrParams params;
    if (m.kind == "manifest") {
      std::ifstream in(m.path, std::ios::binary);
      if (!in) fail(ErrorKind::kConfig, "model.path: cannot open manifest " + m.path);
      std::ostringstream text;
      text << in.rdbuf();
      params = four_cstr_params_from_manifest(text.str());
    }
    params.validate();
    u = four_cstr_inputs(params);
    x0 = four_cstr_steady_state(params);
    desc = m.kind == "manifest" ? "four-cstr (manifest)" : "four-cstr";
    return four_cstr_catalog(params);
  }
  if (m.kind == "linear-benchmark") {
    LinearBenchmarkSpec spec;
    spec.n_states = m.n_states;
    spec.n_sensors = m.n_sensors;
    spec.coupling_density = m.coupling_density;
    spec.seed = m.seed;
    const LinearBenchmark b = make_linear_benchmark(spec);
    x0 = b.x0;
    u = Vector();
    desc = "linear-benchmark";
    return b.catalog();
  }
  SyntheticNetworkSpec spec;
  spec.n_states = m.n_states;
  spec.n_sensors = m.n_sensors;
  spec.coupling_density = m.coupling_density;
  spec.nonlinearity = m.nonlinearity;
  spec.seed = m.seed;
  SyntheticNetwork net = make_synthetic_network(spec);
  x0 = net.x0;
  u = net.u;
  desc = "synthetic";
  return net.catalog;
}

SensorSet resolve_selection(const RunConfig& config, const Problem& problem,
                            const SelectionTrace& trace, int threads, ojson& out) {
  const SubsetEvaluator& ev = *problem.evaluator;
  switch (config.strategy) {
    case Strategy::kBackward:
      return trace.final_set;
    case Strategy::kForward: {
      const int target =
          config.target_size > 0 ? config.target_size : static_cast<int>(trace.final_set.size());
      if (target > ev.n_sensors()) {
        fail(ErrorKind::kConfig, "target_size exceeds the number of sensors");
      }
      const std::vector<int> order = forward_greedy(ev, target, threads);
      const SensorSet set = canonical(order);
      const ObservabilityReport r = ev.evaluate(set);
      out["forward"] = {{"target_size", target}, {"order", order}, {"set", set},
                        {"degree", r.degree}, {"rank", r.rank}};
      return set;
    }
    case Strategy::kExhaustive: {
      if (ev.n_sensors() > config.exhaustive_cap) {
        fail(ErrorKind::kConfig, "exhaustive strategy refused: " + std::to_string(ev.n_sensors()) +
                                     " sensors exceed exhaustive_cap " +
                                     std::to_string(config.exhaustive_cap));
      }
      const ExhaustiveResult ex = exhaustive_min_observable(ev, config.exhaustive_cap, threads);
      out["exhaustive"] = {{"min_size", ex.min_size},
                           {"best_set", ex.best_set},
                           {"best_degree", ex.best_degree},
                           {"evaluated", ex.evaluated},
                           {"matches_backward", ex.best_set == trace.final_set}};
      return ex.best_set;
    }
  }
  return trace.final_set;
}

// Summary layout: one row per set visited, plus the best rank-deficient
// candidate after the last removal.
std::string summary_csv(const SelectionTrace& trace) {
  std::string out = csv_row({"m", "removed", "selected", "rank", "degree_max", "sensor_to_remove"});
  SensorSet removed;
  SensorSet set = trace.initial_set;
  int rank = trace.initial_report.rank;
  double degree = trace.initial_report.degree;
  for (const RemovalStep& step : trace.steps) {
    out += csv_row({std::to_string(set.size()), format_set(removed), format_set(set),
                    std::to_string(rank), num(degree),
                    step.removed ? std::to_string(*step.removed) : ""});
    if (step.removed) {
      removed.push_back(*step.removed);
      set = step.resulting_set;
      rank = step.resulting_rank;
      degree = step.resulting_degree;
      continue;
    }
    if (step.candidates.empty()) break;
    auto best = step.candidates.begin();
    for (auto it = step.candidates.begin(); it != step.candidates.end(); ++it) {
      if (it->second.F_total > best->second.F_total) best = it;
    }
    SensorSet terminal_removed = removed;
    terminal_removed.push_back(best->first);
    SensorSet remaining;
    for (int id : set) {
      if (id != best->first) remaining.push_back(id);
    }
    out += csv_row({std::to_string(remaining.size()), format_set(terminal_removed),
                    format_set(remaining), std::to_string(best->second.rank),
                    num(best->second.degree), ""});
  }
  return out;
}

std::string candidates_csv(const SelectionTrace& trace) {
  std::string out =
      csv_row({"step", "set_size", "removed_candidate", "remaining_set", "degree", "F_total", "rank"});
  SensorSet set = trace.initial_set;
  for (const RemovalStep& step : trace.steps) {
    for (const auto& [id, c] : step.candidates) {
      SensorSet remaining;
      for (int s : set) {
        if (s != id) remaining.push_back(s);
      }
      out += csv_row({std::to_string(step.step_index), std::to_string(set.size()),
                      std::to_string(id), format_set(remaining), num(c.degree), num(c.F_total),
                      std::to_string(c.rank)});
    }
    if (step.removed) set = step.resulting_set;
  }
  return out;
}

std::string singular_csv(const std::vector<std::pair<std::string, SensorSet>>& sets,
                         const SubsetEvaluator& ev) {
  std::string out = csv_row({"label", "set", "index", "value"});
  for (const auto& [label, set] : sets) {
    const ObservabilityReport r = ev.evaluate(set);
    for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) {
      out += csv_row({label, format_set(set), std::to_string(i + 1), num(r.singular_values[i])});
    }
  }
  return out;
}

std::vector<SensorSet> default_panel(const SubsetEvaluator& ev) {
  std::vector<SensorSet> panel;
  for (int a = 1; a <= ev.n_sensors(); ++a) {
    for (int b = a + 1; b <= ev.n_sensors(); ++b) {
      if (ev.evaluate({a, b}).degree > 0.0) panel.push_back({a, b});
    }
  }
  return panel;
}

int run_command(const char* name, const RunConfig& config, int threads,
                Bundle (*builder)(const RunConfig&, int)) {
  current_stage = "setup";
  try {
    if (threads < 1) fail(ErrorKind::kConfig, "--threads must be >= 1");
    const Bundle bundle = builder(config, threads);
    current_stage = "write";
    write_bundle(bundle, config.output_dir);
    spdlog::info("{}: wrote {} files to {}", name, bundle.size(), config.output_dir);
    return 0;
  } catch (const std::exception& e) {
    const int code = exit_code_for(e);
    spdlog::error("{} failed during {}: {}", name, current_stage, e.what());
    std::cerr << "obsv " << name << ": " << current_stage << " stage failed: " << e.what() << "\n";
    return code;
  }
}

}  // namespace

std::string version() { return OBSV_VERSION; }

Problem build_problem(const RunConfig& config) {
  current_stage = "model";
  Problem p;
  SensorCatalog catalog = make_catalog(config, p.x0, p.u, p.description);
  p.catalog = std::make_shared<const SensorCatalog>(std::move(catalog));
  const int n = p.catalog->n_states();
  const int m = p.catalog->size();
  const int horizon = config.horizon ? *config.horizon : default_horizon(n, m);
  spdlog::debug("model {}: n={}, m={}, K={}", p.description, n, m, horizon);

  current_stage = "sensitivity";
  p.trajectory = simulate_constant(p.catalog->model(), p.x0, p.u, horizon);
  p.state_sensitivity = propagate_state_sensitivity(p.catalog->model(), p.trajectory);
  RankPolicy policy;
  policy.relative_tol = config.rank_tolerance;
  p.evaluator = std::make_shared<const SubsetEvaluator>(
      *p.catalog, p.trajectory, p.state_sensitivity, default_scales(*p.catalog, p.trajectory),
      policy, config.normalization);
  return p;
}

Bundle build_select_bundle(const RunConfig& config, int threads) {
  const auto t0 = Clock::now();
  const Problem problem = build_problem(config);
  const SubsetEvaluator& ev = *problem.evaluator;
  const SensorCatalog& catalog = *problem.catalog;

  current_stage = "selection";
  const SelectionTrace trace = backward_greedy(ev, threads);
  ojson trace_json;
  trace_json["model"] = {{"kind", config.model.kind},
                         {"description", problem.description},
                         {"n_states", catalog.n_states()},
                         {"n_sensors", catalog.size()},
                         {"labels", labels_for(catalog, catalog.all_ids())}};
  trace_json["horizon"] = ev.horizon();
  trace_json["normalization"] = to_string(config.normalization);
  trace_json["rank_tolerance"] = config.rank_tolerance;
  trace_json["strategy"] = to_string(config.strategy);
  trace_json["initial"] = report_json(trace.initial_set, trace.initial_report);
  ojson steps = ojson::array();
  SensorSet before = trace.initial_set;
  for (const RemovalStep& step : trace.steps) {
    ojson s;
    s["step"] = step.step_index;
    s["set_before"] = before;
    ojson cands = ojson::array();
    for (const auto& [id, c] : step.candidates) {
      cands.push_back({{"removed", id}, {"degree", c.degree}, {"F_total", c.F_total}, {"rank", c.rank}});
    }
    s["candidates"] = cands;
    s["removed"] = step.removed ? ojson(*step.removed) : ojson(nullptr);
    s["resulting_set"] = step.resulting_set;
    s["resulting_degree"] = step.resulting_degree;
    s["resulting_rank"] = step.resulting_rank;
    steps.push_back(s);
    before = step.resulting_set;
  }
  trace_json["steps"] = steps;
  trace_json["removal_order"] = trace.removal_order;
  trace_json["backward"] = {{"final_set", trace.final_set}, {"final_degree", trace.final_degree}};

  const SensorSet selected = resolve_selection(config, problem, trace, threads, trace_json);
  const ObservabilityReport sel = ev.evaluate(selected);
  trace_json["selected"] = {{"set", selected},
                            {"labels", labels_for(catalog, selected)},
                            {"degree", sel.degree},
                            {"rank", sel.rank}};

  current_stage = "report";
  std::vector<std::pair<std::string, SensorSet>> spectra{{"initial", trace.initial_set}};
  for (const RemovalStep& step : trace.steps) {
    if (step.removed) spectra.emplace_back("step_" + std::to_string(step.step_index), step.resulting_set);
  }
  spectra.emplace_back("selected", selected);

  Bundle b;
  b["selection_trace.json"] = dump(trace_json);
  b["selection_summary.csv"] = summary_csv(trace);
  b["candidate_degrees.csv"] = candidates_csv(trace);
  b["singular_values.csv"] = singular_csv(spectra, ev);
  b["metadata.json"] = dump(metadata(config, "select"));
  b["timing.json"] = dump({{"command", "select"}, {"threads", threads}, {"wall_seconds", seconds_since(t0)}});
  return b;
}

Bundle build_estimate_bundle(const RunConfig& config, int threads) {
  const auto t0 = Clock::now();
  const Problem problem = build_problem(config);
  const SubsetEvaluator& ev = *problem.evaluator;
  const SensorCatalog& catalog = *problem.catalog;

  current_stage = "estimation";
  std::vector<SensorSet> panel = config.estimation.panel;
  for (const SensorSet& s : panel) {
    if (s.back() > catalog.size()) {
      fail(ErrorKind::kConfig, "estimation.panel: sensor " + std::to_string(s.back()) +
                                   " is not in the catalog");
    }
  }
  if (panel.empty()) panel = default_panel(ev);
  if (panel.empty()) fail(ErrorKind::kPrecondition, "no observable sensor pair for the default panel");

  const ScaleSet& scales = ev.scales();
  ComparisonSetup setup;
  setup.x0 = problem.x0;
  setup.steps = config.estimation.steps;
  setup.inputs.assign(static_cast<std::size_t>(setup.steps), problem.u);
  setup.process_std = config.noise.process_fraction * scales.state_scales;
  setup.measurement_std = config.noise.measurement_fraction * scales.output_scales;
  setup.base_seed = config.seed;
  setup.runs = config.estimation.runs;
  setup.guess = config.estimation.guess_factor * problem.x0;
  setup.tuning_state_std = config.estimation.tuning_fraction * scales.state_scales;
  setup.tuning_sensor_std = config.estimation.tuning_fraction * scales.output_scales;
  const std::vector<ComparisonRow> rows = subset_comparison(catalog, panel, setup, &ev, threads);

  current_stage = "report";
  std::string csv = csv_row({"rank", "subset", "degree", "mean_rmse", "std_rmse",
                             "mean_normalized_error", "completed", "failed", "first_failure"});
  std::size_t subsets_with_failures = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ComparisonRow& r = rows[i];
    csv += csv_row({std::to_string(i + 1), format_set(r.subset), r.degree ? num(*r.degree) : "",
                    num(r.mean_rmse), num(r.std_rmse), num(r.mean_normalized),
                    std::to_string(r.completed), std::to_string(r.failed), r.first_failure});
    if (r.failed > 0) {
      ++subsets_with_failures;
      spdlog::info("{}: {} of {} runs failed ({})", format_set(r.subset), r.failed,
                   r.failed + r.completed, r.first_failure);
    }
  }
  if (subsets_with_failures > 0) {
    spdlog::warn("{} of {} subsets had failed runs; see estimation_comparison.csv",
                 subsets_with_failures, rows.size());
  }
  Bundle b;
  b["estimation_comparison.csv"] = csv;
  b["metadata.json"] = dump(metadata(config, "estimate"));
  b["timing.json"] = dump({{"command", "estimate"}, {"threads", threads}, {"wall_seconds", seconds_since(t0)}});
  return b;
}

Bundle build_bench_bundle(const RunConfig& config, int threads) {
  const auto t0 = Clock::now();
  current_stage = "bench";
  std::vector<int> sizes = config.bench.sizes;
  const bool fixed_catalog = config.model.kind == "four-cstr" || config.model.kind == "manifest";
  if (fixed_catalog) sizes = {8};
  std::sort(sizes.begin(), sizes.end());
  sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
  auto wants = [&](Strategy s) {
    return std::find(config.bench.strategies.begin(), config.bench.strategies.end(), s) !=
           config.bench.strategies.end();
  };

  std::string csv = csv_row({"m", "n", "status", "o", "backward_set", "backward_degree", "forward_set",
                             "forward_degree", "exhaustive_min_size", "exhaustive_set",
                             "exhaustive_degree", "removal_count", "forward_count",
                             "exhaustive_count", "binary_count"});
  std::set<std::pair<int, int>> count_pairs(config.bench.count_pairs.begin(),
                                            config.bench.count_pairs.end());
  ojson timing_rows = ojson::array();
  for (int m : sizes) {
    RunConfig sub = config;
    if (!fixed_catalog) sub.model.n_sensors = m;
    const Problem problem = build_problem(sub);
    current_stage = "bench";
    const SubsetEvaluator& ev = *problem.evaluator;
    ojson timing{{"m", m}};
    std::vector<std::string> row{std::to_string(m), std::to_string(ev.n_states())};

    const auto tb = Clock::now();
    SelectionTrace trace;
    try {
      trace = backward_greedy(ev, threads);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kPrecondition) throw;
      row.push_back("unobservable");
      row.resize(15);
      csv += csv_row(row);
      timing_rows.push_back(timing);
      continue;
    }
    timing["backward_seconds"] = seconds_since(tb);
    const int o = static_cast<int>(trace.final_set.size());
    row.push_back("ok");
    row.push_back(std::to_string(o));
    row.push_back(wants(Strategy::kBackward) ? format_set(trace.final_set) : "");
    row.push_back(wants(Strategy::kBackward) ? num(trace.final_degree) : "");
    if (wants(Strategy::kForward)) {
      const auto tf = Clock::now();
      const SensorSet set = canonical(forward_greedy(ev, o, threads));
      timing["forward_seconds"] = seconds_since(tf);
      row.push_back(format_set(set));
      row.push_back(num(ev.evaluate(set).degree));
    } else {
      row.insert(row.end(), {"", ""});
    }
    if (wants(Strategy::kExhaustive) && m <= config.exhaustive_cap) {
      const auto te = Clock::now();
      const ExhaustiveResult ex = exhaustive_min_observable(ev, config.exhaustive_cap, threads);
      timing["exhaustive_seconds"] = seconds_since(te);
      row.push_back(std::to_string(ex.min_size));
      row.push_back(format_set(ex.best_set));
      row.push_back(num(ex.best_degree));
    } else {
      row.insert(row.end(), {"", "", ""});
    }
    const ComplexityCounts counts = combination_counts(m, o);
    row.push_back(std::to_string(counts.removal_count));
    row.push_back(std::to_string(counts.forward_count));
    row.push_back(std::to_string(counts.exhaustive_count));
    row.push_back(std::to_string(counts.binary_count));
    csv += csv_row(row);
    count_pairs.emplace(m, o);
    timing_rows.push_back(timing);
  }

  std::string counts_csv =
      csv_row({"m", "o", "removal_count", "forward_count", "exhaustive_count", "binary_count"});
  for (const auto& [m, o] : count_pairs) {
    const ComplexityCounts c = combination_counts(m, o);
    counts_csv += csv_row({std::to_string(m), std::to_string(o), std::to_string(c.removal_count),
                           std::to_string(c.forward_count), std::to_string(c.exhaustive_count),
                           std::to_string(c.binary_count)});
  }

  Bundle b;
  b["bench.csv"] = csv;
  b["counts.csv"] = counts_csv;
  b["metadata.json"] = dump(metadata(config, "bench"));
  b["timing.json"] = dump({{"command", "bench"},
                           {"threads", threads},
                           {"wall_seconds", seconds_since(t0)},
                           {"rows", timing_rows}});
  return b;
}

void write_bundle(const Bundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : bundle) {
    const std::filesystem::path target = dir / name;
    const std::filesystem::path tmp = dir / ("." + name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      out.flush();
      if (!out) throw std::runtime_error("cannot write " + tmp.string());
    }
    std::filesystem::rename(tmp, target);
  }
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::kConfig:
      case ErrorKind::kInvalidArgument:
        return 2;
      case ErrorKind::kPrecondition:
        return 3;
      default:
        return 4;
    }
  }
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e) != nullptr) return 1;
  return 4;
}

int cmd_select(const RunConfig& config, int threads) {
  return run_command("select", config, threads, &build_select_bundle);
}

int cmd_estimate(const RunConfig& config, int threads) {
  return run_command("estimate", config, threads, &build_estimate_bundle);
}

int cmd_bench(const RunConfig& config, int threads) {
  return run_command("bench", config, threads, &build_bench_bundle);
}

void init_logging() {
  if (!spdlog::get("obsv")) spdlog::set_default_logger(spdlog::stderr_color_mt("obsv"));
  spdlog::set_level(spdlog::level::warn);
  const char* env = std::getenv("OBSV_LOG");
  if (env == nullptr || *env == '\0') return;
  const auto level = spdlog::level::from_str(env);
  if (level == spdlog::level::off && std::string(env) != "off") {
    std::cerr << "obsv: ignoring unknown OBSV_LOG level '" << env << "'\n";
    return;
  }
  spdlog::set_level(level);
}

}  // namespace obsv::cli
