#pragma once

// Perturbation protocol: every anchor state is the initial condition of N+1
// short experiments that differ only in the (constant) input. Differencing
// each experiment against the reference removes the drift from the measured
// derivative, leaving  delta_xdot = g(anchor) * delta_u.

#include "ctrlid/dynamics.hpp"
#include "ctrlid/types.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace ctrlid {

enum class DerivativeMode {
  forward_difference,  // (x(t0 + ts) - x(t0)) / ts
  exact,               // evaluate_rhs at t0; test oracle, separates method error from sampling error
};

enum class AnchorSampler {
  uniform,  // i.i.d. uniform over the domain box (normalized onto the sphere for sphere systems)
  lattice,  // 1-D only: evenly spaced grid shifted by one uniform random offset
  user,     // anchors supplied by the caller
};

struct ExperimentPlan {
  std::vector<Vector> anchors;
  /// input_sets[j] holds u^(0)..u^(N) applied at anchor j.
  std::vector<std::vector<Vector>> input_sets;
  double sampling_time = 0.0;
  double integrator_step = 0.0;
  double t0 = 0.0;
  int reference_index = 0;
  double noise_amplitude = 0.0;
  std::uint64_t seed = 0;
  DerivativeMode derivative_mode = DerivativeMode::forward_difference;

  std::size_t experiment_count() const;
  /// Throws InvalidArgument / DomainError if the plan cannot run on `system`.
  void validate(const AffineSystem& system) const;
};

struct ExperimentRecord {
  int anchor_index = 0;
  int input_index = 0;
  Vector u0;
  Vector x_t0;
  Vector x_t0_plus_ts;
  Vector derivative_estimate;
  /// Exact mode only: g(x_t0) u0, kept separately so that differencing two
  /// records at the same anchor never touches the (identical) drift term.
  std::optional<Vector> control_component;
};

struct DifferenceSample {
  Vector anchor_state;
  Vector delta_u;
  Vector delta_xdot;
  int anchor_index = 0;
  int perturbation_index = 0;
};

/// Runs one experiment from `anchor` with constant input `u0` over [t0, t0 + ts].
ExperimentRecord run_experiment(const AffineSystem& system, const Vector& anchor, const Vector& u0,
                                double sampling_time, double integrator_step,
                                double noise_amplitude, std::uint64_t seed, double t0 = 0.0);

/// Forward difference (x(t0 + ts) - x(t0)) / ts.
Vector estimate_derivative(const ExperimentRecord& record, double sampling_time);

/// One sample per non-reference record: reference minus record i.
std::vector<DifferenceSample> form_differences(const std::vector<ExperimentRecord>& records,
                                               int reference_index);

/// u^(0) = 0 and u^(i) = -scale * (1 + floor((i-1)/m)) * e_{(i-1) mod m}.
std::vector<Vector> design_inputs(int input_dim, int perturbations, double scale);

/// Seed of the noise stream for experiment (anchor, input) of a plan.
std::uint64_t experiment_seed(std::uint64_t plan_seed, int anchor_index, int input_index);

struct PlanOptions {
  int num_anchors = 1;
  AnchorSampler sampler = AnchorSampler::uniform;
  std::vector<Vector> user_anchors;
  /// Shared input set; when empty, design_inputs(m, num_perturbations, input_scale).
  std::vector<Vector> inputs;
  int num_perturbations = 0;  // 0 means m
  double input_scale = 1.0;
  double sampling_time = 1e-3;
  double integrator_step = 1e-5;
  double t0 = 0.0;
  double noise_amplitude = 0.0;
  std::uint64_t seed = 0;
  DerivativeMode derivative_mode = DerivativeMode::forward_difference;
};

ExperimentPlan build_plan(const AffineSystem& system, const PlanOptions& options);

/// Draws `count` points in the system's domain (sphere-projected for sphere systems).
std::vector<Vector> sample_states(const AffineSystem& system, int count, AnchorSampler sampler,
                                  std::uint64_t seed);

/// Executes every experiment of the plan. Records are ordered anchor-major,
/// then by input index. Experiments are independent; `threads` > 1 spreads
/// anchors over worker threads without changing the result.
std::vector<ExperimentRecord> run_plan(const AffineSystem& system, const ExperimentPlan& plan,
                                       unsigned threads = 1);

/// form_differences applied anchor by anchor over run_plan output.
std::vector<DifferenceSample> collect_differences(const ExperimentPlan& plan,
                                                  const std::vector<ExperimentRecord>& records);

}  // namespace ctrlid
