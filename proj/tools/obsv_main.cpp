#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "obsv/cli/commands.hpp"
#include "obsv/cli/config.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity-based minimum sensor selection"};
  app.set_version_flag("--version", obsv::cli::version());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  for (const char* name : {"select", "estimate", "bench"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON or TOML run configuration")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Base seed (overrides seed)");
    sub->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  obsv::cli::init_logging();
  obsv::cli::RunConfig config;
  try {
    config = obsv::cli::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "obsv: config stage failed: " << e.what() << "\n";
    return 2;
  }
  if (!out_dir.empty()) config.output_dir = out_dir;
  if (seed) config.seed = *seed;

  const std::string command = app.get_subcommands().front()->get_name();
  if (command == "select") return obsv::cli::cmd_select(config, threads);
  if (command == "estimate") return obsv::cli::cmd_estimate(config, threads);
  return obsv::cli::cmd_bench(config, threads);
}
