// gamma: command-line front end.
//
//   gamma <command> [--config FILE] [--set section.key=value]...
//
// Precedence: config file < GAMMA_SEED < --set.

#include "gamma/config.hpp"
#include "gamma/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"Multi-branch knowledge graph foundation model"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "run configuration file");
  app.add_option("-s,--set", overrides, "override, section.key=value")->take_all();

  const std::vector<std::pair<std::string, std::string>> commands{
      {"synth", "write synthetic source/target datasets"},
      {"build-relgraph", "write typed relation-graph edge lists and counts"},
      {"train", "pretrain and select a checkpoint by validation MRR"},
      {"eval", "zero-shot evaluation of a checkpoint"},
      {"ablate", "fusion-mode and branch-pair ablation matrix"},
      {"detect-patterns", "relational pattern report"},
      {"gradcheck", "finite-difference check of the training loss"},
      {"params", "trainable parameter counts"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gammakg::kExitUsage;
  }

  gammakg::RunConfig config;
  try {
    if (!config_path.empty()) config = gammakg::load_run_config(config_path);
    gammakg::apply_seed_env(config);
    for (const std::string& o : overrides) gammakg::apply_override(config, o);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return gammakg::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  return gammakg::run_command(command, config, std::cout, std::cerr);
}
