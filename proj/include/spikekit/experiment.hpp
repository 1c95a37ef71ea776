#pragma once

#include <optional>
#include <string>
#include <vector>

namespace spikekit {

struct ValidationReport {
  std::vector<std::string> problems;
  bool ok() const { return problems.empty(); }
};

/// Schema and cross-field checks without running the experiment.
ValidationReport validate_config_file(const std::string& config_path);

/// Executes the config's mode and writes history.csv / comparison.csv /
/// samples.csv / uncertainty.csv / encoded.csv plus summary.json into the
/// output directory. Returns 0 on success, 1 on config errors, 2 on
/// runtime failure (partial outputs are retained).
int run_experiment(const std::string& config_path,
                   const std::string& output_dir_override = "",
                   std::optional<std::uint64_t> seed_override = {});

/// Name of the environment variable that overrides the output directory.
extern const char* kOutputDirEnvVar;

}  // namespace spikekit
