// Command-line front end: binds a JSON scenario to the simulation pipelines.
// Exit codes: 0 success, 1 runtime failure, 2 configuration/validation error.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cqhj/pipeline.hpp"
#include "cqhj/scenario.hpp"

namespace {

struct CommonFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> out_dir;
  std::optional<std::vector<double>> tc;
  std::optional<std::vector<double>> times;
  std::optional<double> rel_tol;
  std::optional<int> threads;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "scenario JSON file");
  cmd->add_option("--out", flags.out_dir, "output directory");
  cmd->add_option("--tc", flags.tc, "isochrone crossing times")
      ->delimiter(',');
  cmd->add_option("--time", flags.times, "field/node analysis times")
      ->delimiter(',');
  cmd->add_option("--rel-tol", flags.rel_tol, "integrator relative tolerance");
  cmd->add_option("--threads", flags.threads, "worker threads (0 = auto)");
}

cqhj::ScenarioConfig resolve_config(const CommonFlags& flags) {
  cqhj::ScenarioConfig cfg = flags.config_path
                                 ? cqhj::load_scenario_file(*flags.config_path)
                                 : cqhj::make_default_scenario();
  if (flags.out_dir) cfg.out_dir = *flags.out_dir;
  if (flags.tc) {
    cfg.isochrones.tc = *flags.tc;
    cfg.singular.tc = *flags.tc;
  }
  if (flags.times) {
    cfg.fields.times = *flags.times;
    cfg.singular.times = *flags.times;
  }
  if (flags.rel_tol) cfg.integrator.rel_tol = *flags.rel_tol;
  if (flags.threads) {
    cfg.threads = *flags.threads;
  } else if (const char* env = std::getenv("CQHJ_THREADS")) {
    try {
      cfg.threads = std::stoi(env);
    } catch (const std::exception&) {
      throw cqhj::ConfigError("CQHJ_THREADS", "must be an integer");
    }
  }
  cfg.validate();
  return cfg;
}

// stdout carries only this machine-readable summary
void print_summary(const std::string& command,
                   const std::vector<std::filesystem::path>& written) {
  nlohmann::json j;
  j["command"] = command;
  j["outputs"] = nlohmann::json::array();
  for (const auto& p : written) j["outputs"].push_back(p.string());
  std::cout << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Complex quantum trajectory simulation for colliding Gaussian packets"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* cmd_fields = app.add_subcommand("fields", "sample field grids");
  auto* cmd_traj = app.add_subcommand("trajectories", "propagate trajectories");
  auto* cmd_iso = app.add_subcommand("isochrones", "build isochrone families");
  auto* cmd_sing = app.add_subcommand("singular", "nodes, loops and caustics");
  for (auto* cmd : {cmd_fields, cmd_traj, cmd_iso, cmd_sing})
    add_common_flags(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const cqhj::ScenarioConfig cfg = resolve_config(flags);
    std::vector<std::filesystem::path> written;
    std::string name;
    if (cmd_fields->parsed()) {
      name = "fields";
      written = cqhj::run_fields(cfg);
    } else if (cmd_traj->parsed()) {
      name = "trajectories";
      written = cqhj::run_trajectories(cfg);
    } else if (cmd_iso->parsed()) {
      name = "isochrones";
      written = cqhj::run_isochrones(cfg);
    } else {
      name = "singular";
      written = cqhj::run_singular(cfg);
    }
    print_summary(name, written);
    return 0;
  } catch (const cqhj::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
