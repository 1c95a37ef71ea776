#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "spikekit/experiment.hpp"
#include "fetch_mnist.hpp"

int main(int argc, char** argv) {
  CLI::App app{"spikekit - spiking-network learning-rules workbench"};
  app.require_subcommand(1);

  std::string run_config, out_dir;
  std::optional<std::uint64_t> seed;
  CLI::App* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", run_config, "experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "override the output directory");
  std::uint64_t seed_value = 0;
  CLI::Option* seed_opt =
      run->add_option("--seed", seed_value, "override the config seed");

  std::string validate_config;
  CLI::App* validate =
      app.add_subcommand("validate", "check a config without running it");
  validate->add_option("config", validate_config, "experiment config (JSON)")
      ->required();

  std::string mnist_dir;
  CLI::App* fetch = app.add_subcommand(
      "fetch-mnist", "download the MNIST IDX files (checksum-verified)");
  fetch->add_option("dir", mnist_dir, "target directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    if (seed_opt->count() > 0) seed = seed_value;
    return spikekit::run_experiment(run_config, out_dir, seed);
  }
  if (validate->parsed()) {
    const spikekit::ValidationReport report =
        spikekit::validate_config_file(validate_config);
    if (report.ok()) {
      std::cout << "ok\n";
      return 0;
    }
    for (const std::string& p : report.problems) std::cout << p << "\n";
    return 1;
  }
  return spikekit::tools::fetch_mnist(mnist_dir);
}
