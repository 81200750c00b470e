#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "obsv/cli/commands.hpp"
#include "obsv/cli/config.hpp"
#include "obsv/error.hpp"

using namespace obsv;
using namespace obsv::cli;
using nlohmann::json;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

ErrorKind kind_of(const json& doc) {
  try {
    parse_config_json(doc);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("config was accepted");
  return ErrorKind::kInvalidArgument;
}

Bundle without_timing(Bundle b) {
  b.erase("timing.json");
  return b;
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig c = parse_config_json(json::object());
  CHECK(c.model.kind == "four-cstr");
  CHECK(c.normalization == Normalization::kBoth);
  CHECK(c.rank_tolerance == 1e-8);
  CHECK(c.strategy == Strategy::kBackward);
  CHECK_FALSE(c.horizon.has_value());
}

TEST_CASE("invalid configs are rejected as config errors") {
  CHECK(kind_of(json{{"strategy", "random"}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"colour", 1}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"model", {{"kind", "four-cstr"}, {"n_states", 4}}}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"horizon", "ten"}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"horizon", 0}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"rank_tolerance", -1.0}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"normalization", "sideways"}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"estimation", {{"panel", {{1, 0}}}}}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"estimation", {{"panel", {{1, 1}}}}}}) == ErrorKind::kConfig);
  CHECK(kind_of(json{{"model", {{"kind", "manifest"}}}}) == ErrorKind::kConfig);
}

TEST_CASE("toml and json configs agree") {
  const RunConfig t = load_config(OBSV_CONFIG_DIR "/four_cstr_estimate.toml");
  const json doc = toml_to_json(R"(
seed = 1000
output_dir = "out/four_cstr_estimate"
[model]
kind = "four-cstr"
[estimation]
panel = [[1, 2], [1, 3], [1, 4], [1, 6], [1, 7], [1, 8], [2, 3], [2, 5],
         [3, 4], [3, 6], [3, 7], [3, 8], [4, 5], [5, 6], [5, 8], [4, 8]]
)");
  CHECK(to_json(parse_config_json(doc)).dump() == to_json(t).dump());
  CHECK(t.estimation.panel.size() == 16);
  CHECK_THROWS_AS(toml_to_json("seed = = 3"), Error);
}

TEST_CASE("config echo round trips") {
  for (const char* name : {"four_cstr_select.toml", "four_cstr_exhaustive.json",
                           "synthetic_bench.toml", "linear_select.json"}) {
    const RunConfig c = load_config(std::string(OBSV_CONFIG_DIR "/") + name);
    const json echo = json::parse(to_json(c).dump());
    CHECK(to_json(parse_config_json(echo)).dump() == to_json(c).dump());
  }
}

TEST_CASE("manifest paths resolve against the config file") {
  const RunConfig c = load_config(OBSV_CONFIG_DIR "/manifest_select.json");
  CHECK(std::filesystem::exists(c.model.path));
  const Problem p = build_problem(c);
  CHECK(p.catalog->size() == 8);
}

TEST_CASE("exit codes") {
  CHECK(exit_code_for(Error(ErrorKind::kConfig, "x")) == 2);
  CHECK(exit_code_for(Error(ErrorKind::kInvalidArgument, "x")) == 2);
  CHECK(exit_code_for(Error(ErrorKind::kPrecondition, "x")) == 3);
  CHECK(exit_code_for(Error(ErrorKind::kConvergence, "x")) == 4);
  CHECK(exit_code_for(IntegrationError("x", 3)) == 4);
}

TEST_CASE("select bundle is thread-invariant and reports the greedy result") {
  const RunConfig c = load_config(OBSV_CONFIG_DIR "/four_cstr_select.toml");
  const Bundle one = build_select_bundle(c, 1);
  const Bundle eight = build_select_bundle(c, 8);
  CHECK(without_timing(one) == without_timing(eight));
  for (const char* name : {"selection_trace.json", "selection_summary.csv", "candidate_degrees.csv",
                           "singular_values.csv", "metadata.json", "timing.json"}) {
    CHECK(one.count(name) == 1);
  }
  const json trace = json::parse(one.at("selection_trace.json"));
  CHECK(trace.at("selected").at("set") == json{4, 8});
  CHECK(trace.at("removal_order") == json{1, 2, 5, 6, 3, 7});
  CHECK(trace.at("horizon") == 3);
  const auto summary = lines_of(one.at("selection_summary.csv"));
  CHECK(summary.front() == "m,removed,selected,rank,degree_max,sensor_to_remove");
  CHECK(summary.size() == 9);  // header, m = 8..2, terminal row
}

TEST_CASE("unobservable initial set is a precondition failure") {
  RunConfig c;
  c.model.kind = "linear-benchmark";
  c.model.n_states = 4;
  c.model.n_sensors = 1;
  c.model.seed = 1;
  c.horizon = 0;
  try {
    build_select_bundle(c, 1);
    FAIL("expected a failure");
  } catch (const Error& e) {
    CHECK(exit_code_for(e) == 3);
  }
}

TEST_CASE("estimate bundle ranks every panel subset") {
  RunConfig c = load_config(OBSV_CONFIG_DIR "/four_cstr_estimate.toml");
  c.estimation.runs = 3;
  const Bundle one = build_estimate_bundle(c, 1);
  const Bundle four = build_estimate_bundle(c, 4);
  CHECK(without_timing(one) == without_timing(four));
  const auto rows = lines_of(one.at("estimation_comparison.csv"));
  REQUIRE(rows.size() == 17);
  CHECK(rows[0] ==
        "rank,subset,degree,mean_rmse,std_rmse,mean_normalized_error,completed,failed,first_failure");
  CHECK(rows[1].rfind("1,", 0) == 0);
}

TEST_CASE("bench counts") {
  RunConfig c = load_config(OBSV_CONFIG_DIR "/synthetic_bench.toml");
  c.bench.sizes = {9, 8};
  const Bundle b = build_bench_bundle(c, 1);
  const auto counts = lines_of(b.at("counts.csv"));
  CHECK(counts.front() == "m,o,removal_count,forward_count,exhaustive_count,binary_count");
  CHECK(std::find(counts.begin(), counts.end(), "8,2,35,15,36,256") != counts.end());
  bool found = false;
  for (const std::string& line : counts) found = found || line.rfind("16,10,91,", 0) == 0;
  CHECK(found);
  const auto bench = lines_of(b.at("bench.csv"));
  REQUIRE(bench.size() == 3);
  CHECK(bench[1].rfind("8,", 0) == 0);
  CHECK(bench[2].rfind("9,", 0) == 0);
}

TEST_CASE("write_bundle leaves no temporaries") {
  const auto dir = std::filesystem::temp_directory_path() / "obsv_test_cli_bundle";
  std::filesystem::remove_all(dir);
  write_bundle({{"a.txt", "alpha"}, {"b.txt", "beta"}}, dir);
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    ++files;
    CHECK(entry.path().filename().string().front() != '.');
  }
  CHECK(files == 2);
  std::ifstream in(dir / "a.txt");
  std::string text;
  std::getline(in, text);
  CHECK(text == "alpha");
  std::filesystem::remove_all(dir);
}
