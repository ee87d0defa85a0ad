// Copyright The romforge Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "romforge/experiments.hpp"
#include "romforge/io.hpp"
#include "romforge/kernels.hpp"
#include "romforge/types.hpp"

namespace
{

constexpr int EXIT_CONFIG = 2;
constexpr int EXIT_NUMERICAL = 3;

int run(const std::string &config_path, std::string output, bool force)
{
  const romforge::ExperimentConfig cfg = romforge::parse_config(romforge::read_text(config_path));
  if (output.empty())
  {
    output = cfg.output;
  }
  if (output.empty())
  {
    throw romforge::ConfigError("no output directory: pass --output or set 'output' in the config");
  }
  const romforge::RunSummary summary = romforge::run_experiment(cfg, output, force);
  for (const auto &w : summary.warnings)
  {
    std::cerr << "WARN: " << w << "\n";
  }
  std::cout << "wrote " << summary.files.size() << " artifacts to " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Constrained POD-Galerkin reduced-order models for chaotic flows"};
  app.require_subcommand(1);

  std::string config_path, output, inspect_dir;
  bool force = false;
  auto *run_cmd = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run_cmd->add_option("-c,--config", config_path, "Experiment config")->required();
  run_cmd->add_option("-o,--output", output, "Output directory (overrides the config)");
  run_cmd->add_flag("-f,--force", force, "Replace an existing output directory");
  auto *inspect_cmd = app.add_subcommand("inspect", "Describe an artifact directory");
  inspect_cmd->add_option("dir", inspect_dir, "Artifact directory")->required();

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError &e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : EXIT_CONFIG;
  }

  romforge::apply_thread_cap();
  try
  {
    if (*run_cmd)
    {
      return run(config_path, output, force);
    }
    std::cout << romforge::inspect_artifacts(inspect_dir);
    return 0;
  }
  catch (const romforge::ConfigError &e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_CONFIG;
  }
  catch (const romforge::NumericalError &e)
  {
    std::cerr << "numerical error: " << e.what() << "\n";
    return EXIT_NUMERICAL;
  }
  catch (const std::exception &e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
