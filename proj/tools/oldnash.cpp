// Command-line front end:
//   oldnash {verify|nash|leader|sweep} --config <path> [--out <dir>] [--seed <u64>]

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "oldnash/scenario.hpp"

namespace {

int exit_code_for(oldnash::ErrorCode c) {
  using EC = oldnash::ErrorCode;
  switch (c) {
    case EC::config_unknown_key:
    case EC::config_missing_key:
    case EC::config_bad_value:
    case EC::region_violation:
    case EC::non_dissipative:
    case EC::invalid_argument:
      return 2;
    case EC::solver_diverged:
    case EC::solver_nan:
    case EC::factorization_failed:
      return 3;
    case EC::io_failed:
    case EC::checkpoint_bad_magic:
    case EC::checkpoint_bad_version:
    case EC::checkpoint_truncated:
    case EC::checkpoint_grid_mismatch:
      return 4;
    default:
      return 5;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stackelberg-Nash hierarchical control for the memory-Stokes system"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  for (const char* name : {"verify", "nash", "leader", "sweep"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "scenario config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides run.out_dir)");
    sub->add_option("--seed", seed, "seed (overrides run.seed)")
        ->each([&](const std::string&) { seed_given = true; });
  }

  CLI11_PARSE(app, argc, argv);
  const std::string subcommand = app.get_subcommands().front()->get_name();

  try {
    std::ifstream is(config_path);
    if (!is)
      throw oldnash::Error(oldnash::ErrorCode::io_failed, "cannot read config: " + config_path);
    std::stringstream buf;
    buf << is.rdbuf();

    oldnash::ScenarioConfig cfg = oldnash::parse_config(buf.str());
    if (seed_given) {
      cfg.seed = seed;
      cfg.seed_set = true;
    }
    oldnash::require_seed(cfg);
    const std::string out = out_dir.empty() ? cfg.out_dir : out_dir;
    return oldnash::run_scenario(cfg, subcommand, out);
  } catch (const oldnash::Error& e) {
    oldnash::Json err;
    err["error"]["code"] = oldnash::error_code_name(e.code());
    err["error"]["message"] = e.what();
    std::cerr << err.dump(2) << std::endl;
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "{\"error\":{\"code\":\"internal\",\"message\":\"" << e.what() << "\"}}"
              << std::endl;
    return 5;
  }
}
