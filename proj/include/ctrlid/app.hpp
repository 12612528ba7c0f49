#pragma once

// Command-line driver: resolves a run configuration into a scenario, runs it
// and writes JSON/CSV artifacts atomically into an output directory.
//
// Exit codes: 0 success, 1 runtime failure (partial artifacts plus
// error_report.json), 2 configuration error (nothing written).

#include "ctrlid/errors.hpp"
#include "ctrlid/scenarios.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ctrlid::app {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  std::optional<std::string> scenario;
  std::optional<std::filesystem::path> config_path;
  std::filesystem::path out_dir;
  /// Command-line overrides; these win over values from the config file.
  Overrides overrides;
};

struct Artifact {
  std::string filename;
  std::string content;
};

using ArtifactSink = std::function<void(const Artifact&)>;

/// Loads the config file (if any), merges overrides and builds the scenario.
/// Every failure surfaces as ConfigError.
Scenario resolve_config(const RunConfig& config);

/// {"schema_version", "scenario", "checksum", "overrides": {every key}}.
/// Feeding it back through --config reproduces the run.
nlohmann::json effective_config(const Scenario& scenario);

/// Runs the scenario and hands each artifact to `sink` as soon as it exists.
void run_scenario(const Scenario& scenario, const ArtifactSink& sink);
std::vector<Artifact> run_scenario(const Scenario& scenario);

/// Writes through a temporary file and rename; returns the final paths.
std::filesystem::path write_atomic(const std::filesystem::path& dir, const Artifact& artifact);
std::vector<std::filesystem::path> emit_reports(const std::vector<Artifact>& artifacts,
                                                const std::filesystem::path& dir);

/// Full CLI entry point (argument parsing, exit-code mapping).
int main(int argc, char** argv);

}  // namespace ctrlid::app
