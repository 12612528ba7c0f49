#pragma once

// Built-in experiment configurations: linear_2x2, bloch, prc and prc_noise.
// Every tunable lives in ScenarioSettings; overrides are string key/value
// pairs using the CLI vocabulary (ts, dt, basis, order, num_anchors, ...).

#include "ctrlid/basis.hpp"
#include "ctrlid/dynamics.hpp"
#include "ctrlid/experiment.hpp"
#include "ctrlid/recovery.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctrlid {

using Overrides = std::map<std::string, std::string>;

/// g(theta) = -sin(theta) exp(3 (cos(theta - 0.9 pi) - 1)).
double example_prc(double theta);

struct ScenarioSettings {
  std::string name;
  std::uint64_t seed = 1;
  double sampling_time = 1e-3;
  double integrator_step = 1e-5;
  BasisFamily basis = BasisFamily::monomial;
  int order = 0;
  BasisFamily drift_basis = BasisFamily::monomial;
  int drift_order = 1;
  int num_anchors = 1;
  /// 0 keeps the scenario's own input list.
  int num_perturbations = 0;
  AnchorSampler sampler = AnchorSampler::uniform;
  double noise = 0.0;
  int trials = 1;
  std::vector<int> study_perturbations;
  double input_bound = 1.0;
  bool oracle_derivatives = false;
  int validation_points = 0;
  int free_run_samples = 200;
  /// Also feed the perturbation records into the drift fit.
  bool drift_records = false;
  // System constants.
  Matrix A;
  Matrix B;
  double epsilon = 0.0;
  double omega = 0.0;
  double frequency_slope = 0.0;  // omega(t) = slope * t for the phase model
};

/// Published reference values for a scenario, when there are any.
struct ReferenceValues {
  std::optional<Matrix> recovered_gain;
  std::optional<Matrix> delta_u;
  std::optional<Matrix> delta_xdot;  // n x N, column i is difference i
};

struct Scenario {
  ScenarioSettings settings;
  AffineSystem system;
  PlanOptions plan;
  BasisSpec basis;
  BasisSpec drift_basis;
  ReferenceValues reference;

  bool is_noise_study() const { return settings.name == "prc_noise"; }
  bool has_drift_stage() const { return settings.name == "linear_2x2"; }
  ExperimentPlan build() const { return build_plan(system, plan); }
};

const std::vector<std::string>& scenario_names();
/// Override keys accepted by load_scenario.
const std::vector<std::string>& override_keys();

/// Throws InvalidArgument on an unknown name, key, or malformed value.
Scenario load_scenario(std::string_view name, const Overrides& overrides = {});

/// Canonical text listing of every setting; stable across runs and platforms
/// using IEEE doubles.
std::string canonical_settings(const ScenarioSettings& settings);
/// 64-bit FNV-1a of canonical_settings.
std::uint64_t scenario_checksum(const ScenarioSettings& settings);

/// Shortest round-trip decimal form of a double.
std::string format_double(double value);

std::string_view to_string(AnchorSampler sampler);
AnchorSampler parse_sampler(std::string_view name);

}  // namespace ctrlid
