#include "obsv/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "obsv/error.hpp"

namespace obsv::cli {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  fail(ErrorKind::kConfig, where + ": " + what);
}

void reject_unknown(const json& obj, const std::string& where, std::set<std::string> known) {
  if (!obj.is_object()) config_error(where, "expected a table/object");
  for (const auto& item : obj.items()) {
    if (known.count(item.key()) == 0) config_error(where, "unknown key '" + item.key() + "'");
  }
}

int read_int(const json& v, const std::string& where, int lo, int hi) {
  if (!v.is_number_integer()) config_error(where, "expected an integer");
  const auto x = v.get<long long>();
  if (x < lo || x > hi) {
    config_error(where, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return static_cast<int>(x);
}

std::uint64_t read_seed(const json& v, const std::string& where) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) {
    return static_cast<std::uint64_t>(v.get<long long>());
  }
  config_error(where, "expected a non-negative integer");
}

double read_double(const json& v, const std::string& where, double lo, double hi,
                   bool open_low = false) {
  if (!v.is_number()) config_error(where, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x) || x > hi || x < lo || (open_low && x == lo)) {
    std::ostringstream os;
    os << "must lie in " << (open_low ? "(" : "[") << lo << ", " << hi << "]";
    config_error(where, os.str());
  }
  return x;
}

std::string read_string(const json& v, const std::string& where) {
  if (!v.is_string()) config_error(where, "expected a string");
  return v.get<std::string>();
}

Strategy parse_strategy(const std::string& s, const std::string& where) {
  if (s == "backward") return Strategy::kBackward;
  if (s == "forward") return Strategy::kForward;
  if (s == "exhaustive") return Strategy::kExhaustive;
  config_error(where, "unknown strategy '" + s + "' (expected backward|forward|exhaustive)");
}

SensorSet read_set(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) config_error(where, "expected a non-empty array of sensor ids");
  SensorSet s;
  for (const auto& id : v) s.push_back(read_int(id, where, 1, 1 << 20));
  SensorSet c = canonical(s);
  if (c.size() != s.size()) config_error(where, "duplicate sensor ids");
  return c;
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kBackward: return "backward";
    case Strategy::kForward: return "forward";
    case Strategy::kExhaustive: return "exhaustive";
  }
  return "backward";
}

RunConfig parse_config_json(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig c;
  reject_unknown(doc, "config",
                 {"model", "horizon", "normalization", "rank_tolerance", "strategy", "target_size",
                  "exhaustive_cap", "seed", "noise", "estimation", "bench", "output_dir"});

  if (doc.contains("model")) {
    const json& m = doc.at("model");
    reject_unknown(m, "model",
                   {"kind", "path", "n_states", "n_sensors", "coupling_density", "nonlinearity",
                    "seed"});
    if (m.contains("kind")) c.model.kind = read_string(m.at("kind"), "model.kind");
    const std::string& kind = c.model.kind;
    if (kind != "four-cstr" && kind != "manifest" && kind != "linear-benchmark" &&
        kind != "synthetic") {
      config_error("model.kind",
                   "unknown model '" + kind + "' (expected four-cstr|manifest|linear-benchmark|synthetic)");
    }
    if (kind == "synthetic") {
      c.model.n_states = 20;
      c.model.n_sensors = 12;
      c.model.coupling_density = 0.2;
    }
    const bool generated = kind == "linear-benchmark" || kind == "synthetic";
    for (const char* key : {"n_states", "n_sensors", "coupling_density", "nonlinearity", "seed"}) {
      if (m.contains(key) && !generated) {
        config_error(std::string("model.") + key, "only valid for generated models");
      }
    }
    if (m.contains("path") && kind != "manifest") {
      config_error("model.path", "only valid for the manifest model");
    }
    if (kind == "manifest") {
      if (!m.contains("path")) config_error("model.path", "required for the manifest model");
      std::filesystem::path p = read_string(m.at("path"), "model.path");
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      c.model.path = p.lexically_normal().string();
    }
    if (m.contains("n_states")) c.model.n_states = read_int(m.at("n_states"), "model.n_states", 1, 500);
    if (m.contains("n_sensors")) {
      c.model.n_sensors = read_int(m.at("n_sensors"), "model.n_sensors", 1, 63);
    }
    if (kind == "linear-benchmark" && c.model.n_sensors > 20) {
      config_error("model.n_sensors", "linear benchmarks support at most 20 sensors");
    }
    if (m.contains("coupling_density")) {
      c.model.coupling_density =
          read_double(m.at("coupling_density"), "model.coupling_density", 0.0, 1.0, true);
    }
    if (m.contains("nonlinearity")) {
      if (kind != "synthetic") config_error("model.nonlinearity", "only valid for synthetic models");
      try {
        c.model.nonlinearity = parse_nonlinearity(read_string(m.at("nonlinearity"), "model.nonlinearity"));
      } catch (const Error& e) {
        config_error("model.nonlinearity", e.what());
      }
    }
    if (m.contains("seed")) c.model.seed = read_seed(m.at("seed"), "model.seed");
  }

  if (doc.contains("horizon") && !doc.at("horizon").is_null()) {
    c.horizon = read_int(doc.at("horizon"), "horizon", 1, 10000);
  }
  if (doc.contains("normalization")) {
    try {
      c.normalization = parse_normalization(read_string(doc.at("normalization"), "normalization"));
    } catch (const Error& e) {
      config_error("normalization", e.what());
    }
  }
  if (doc.contains("rank_tolerance")) {
    c.rank_tolerance = read_double(doc.at("rank_tolerance"), "rank_tolerance", 0.0, 0.5, true);
  }
  if (doc.contains("strategy")) {
    c.strategy = parse_strategy(read_string(doc.at("strategy"), "strategy"), "strategy");
  }
  if (doc.contains("target_size")) c.target_size = read_int(doc.at("target_size"), "target_size", 0, 63);
  if (doc.contains("exhaustive_cap")) {
    c.exhaustive_cap = read_int(doc.at("exhaustive_cap"), "exhaustive_cap", 1, 24);
  }
  if (doc.contains("seed")) c.seed = read_seed(doc.at("seed"), "seed");

  if (doc.contains("noise")) {
    const json& n = doc.at("noise");
    reject_unknown(n, "noise", {"process_fraction", "measurement_fraction"});
    if (n.contains("process_fraction")) {
      c.noise.process_fraction = read_double(n.at("process_fraction"), "noise.process_fraction", 0.0, 10.0);
    }
    if (n.contains("measurement_fraction")) {
      c.noise.measurement_fraction =
          read_double(n.at("measurement_fraction"), "noise.measurement_fraction", 0.0, 10.0);
    }
  }

  if (doc.contains("estimation")) {
    const json& e = doc.at("estimation");
    reject_unknown(e, "estimation", {"steps", "runs", "guess_factor", "tuning_fraction", "panel"});
    if (e.contains("steps")) c.estimation.steps = read_int(e.at("steps"), "estimation.steps", 1, 100000);
    if (e.contains("runs")) c.estimation.runs = read_int(e.at("runs"), "estimation.runs", 1, 10000);
    if (e.contains("guess_factor")) {
      c.estimation.guess_factor =
          read_double(e.at("guess_factor"), "estimation.guess_factor", 0.0, 10.0, true);
    }
    if (e.contains("tuning_fraction")) {
      c.estimation.tuning_fraction =
          read_double(e.at("tuning_fraction"), "estimation.tuning_fraction", 0.0, 10.0, true);
    }
    if (e.contains("panel")) {
      const json& p = e.at("panel");
      if (!p.is_array()) config_error("estimation.panel", "expected an array of sensor sets");
      for (std::size_t i = 0; i < p.size(); ++i) {
        c.estimation.panel.push_back(read_set(p[i], "estimation.panel[" + std::to_string(i) + "]"));
      }
    }
  }

  if (doc.contains("bench")) {
    const json& b = doc.at("bench");
    reject_unknown(b, "bench", {"sizes", "strategies", "count_pairs"});
    if (b.contains("sizes")) {
      const json& s = b.at("sizes");
      if (!s.is_array() || s.empty()) config_error("bench.sizes", "expected a non-empty array");
      c.bench.sizes.clear();
      for (const auto& v : s) c.bench.sizes.push_back(read_int(v, "bench.sizes", 1, 63));
    }
    if (b.contains("strategies")) {
      const json& s = b.at("strategies");
      if (!s.is_array() || s.empty()) config_error("bench.strategies", "expected a non-empty array");
      c.bench.strategies.clear();
      for (const auto& v : s) {
        c.bench.strategies.push_back(
            parse_strategy(read_string(v, "bench.strategies"), "bench.strategies"));
      }
    }
    if (b.contains("count_pairs")) {
      const json& s = b.at("count_pairs");
      if (!s.is_array()) config_error("bench.count_pairs", "expected an array of [m, o] pairs");
      c.bench.count_pairs.clear();
      for (const auto& v : s) {
        if (!v.is_array() || v.size() != 2) config_error("bench.count_pairs", "expected [m, o]");
        const int m = read_int(v[0], "bench.count_pairs", 1, 63);
        const int o = read_int(v[1], "bench.count_pairs", 1, 63);
        if (o > m) config_error("bench.count_pairs", "o must not exceed m");
        c.bench.count_pairs.emplace_back(m, o);
      }
    }
  }

  if (doc.contains("output_dir")) {
    c.output_dir = read_string(doc.at("output_dir"), "output_dir");
    if (c.output_dir.empty()) config_error("output_dir", "must not be empty");
  }
  return c;
}

nlohmann::json toml_to_json(const std::string& text, const std::string& source) {
  toml::table table;
  try {
    table = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " at line " << e.source().begin.line;
    config_error(source, os.str());
  }
  std::ostringstream os;
  os << toml::json_formatter{table};
  return json::parse(os.str());
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) config_error(path.string(), "cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const std::string ext = path.extension().string();
  json doc;
  if (ext == ".toml") {
    doc = toml_to_json(text, path.string());
  } else if (ext == ".json") {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      config_error(path.string(), e.what());
    }
  } else {
    config_error(path.string(), "config extension must be .json or .toml");
  }
  return parse_config_json(doc, path.parent_path());
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json model;
  model["kind"] = c.model.kind;
  if (c.model.kind == "manifest") model["path"] = c.model.path;
  if (c.model.kind == "linear-benchmark" || c.model.kind == "synthetic") {
    model["n_states"] = c.model.n_states;
    model["n_sensors"] = c.model.n_sensors;
    model["coupling_density"] = c.model.coupling_density;
    if (c.model.kind == "synthetic") model["nonlinearity"] = to_string(c.model.nonlinearity);
    model["seed"] = c.model.seed;
  }
  j["model"] = model;
  j["horizon"] = c.horizon ? nlohmann::ordered_json(*c.horizon) : nlohmann::ordered_json(nullptr);
  j["normalization"] = to_string(c.normalization);
  j["rank_tolerance"] = c.rank_tolerance;
  j["strategy"] = to_string(c.strategy);
  j["target_size"] = c.target_size;
  j["exhaustive_cap"] = c.exhaustive_cap;
  j["seed"] = c.seed;
  j["noise"] = {{"process_fraction", c.noise.process_fraction},
                {"measurement_fraction", c.noise.measurement_fraction}};
  nlohmann::ordered_json est;
  est["steps"] = c.estimation.steps;
  est["runs"] = c.estimation.runs;
  est["guess_factor"] = c.estimation.guess_factor;
  est["tuning_fraction"] = c.estimation.tuning_fraction;
  est["panel"] = nlohmann::ordered_json::array();
  for (const SensorSet& s : c.estimation.panel) est["panel"].push_back(s);
  j["estimation"] = est;
  nlohmann::ordered_json bench;
  bench["sizes"] = c.bench.sizes;
  bench["strategies"] = nlohmann::ordered_json::array();
  for (Strategy s : c.bench.strategies) bench["strategies"].push_back(to_string(s));
  bench["count_pairs"] = nlohmann::ordered_json::array();
  for (const auto& [m, o] : c.bench.count_pairs) bench["count_pairs"].push_back({m, o});
  j["bench"] = bench;
  j["output_dir"] = c.output_dir;
  return j;
}

}  // namespace obsv::cli
