#pragma once

// End-to-end pipeline: plan -> experiments -> differences -> per-output
// regressions -> recovered fields, plus validation against ground truth and
// the noise-convergence study.

#include "ctrlid/basis.hpp"
#include "ctrlid/dynamics.hpp"
#include "ctrlid/experiment.hpp"
#include "ctrlid/regression.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ctrlid {

class RecoveredControlField {
 public:
  RecoveredControlField(BasisSpec spec, Index state_dim, Index input_dim,
                        std::vector<Vector> output_coefficients,
                        std::vector<LeastSquaresSolution> diagnostics);

  Index state_dim() const noexcept { return n_; }
  Index input_dim() const noexcept { return m_; }
  const BasisSpec& basis() const noexcept { return spec_; }
  BasisSpec entry_basis(Index j, Index s) const { return spec_.for_entry(j, s, m_); }

  /// n x m gain matrix at x.
  Matrix evaluate(const Vector& x) const;
  double entry(Index j, Index s, const Vector& x) const;

  /// Coefficients of output row j, laid out input-major (s, k).
  const Vector& output_coefficients(Index j) const;
  Vector entry_coefficients(Index j, Index s) const;
  /// All outputs concatenated.
  Vector stacked_coefficients() const;
  const std::vector<LeastSquaresSolution>& diagnostics() const noexcept { return diagnostics_; }

 private:
  BasisSpec spec_;
  Index n_;
  Index m_;
  std::vector<Vector> coefficients_;
  std::vector<Index> entry_offsets_;  // n*m offsets into each output's coefficient vector
  std::vector<LeastSquaresSolution> diagnostics_;
};

class RecoveredDriftField {
 public:
  RecoveredDriftField(BasisSpec spec, Matrix coefficients,
                      std::vector<LeastSquaresSolution> diagnostics);

  const BasisSpec& basis() const noexcept { return spec_; }
  /// n x feature_count.
  const Matrix& coefficients() const noexcept { return coefficients_; }
  Vector evaluate(const Vector& x) const;
  const std::vector<LeastSquaresSolution>& diagnostics() const noexcept { return diagnostics_; }

 private:
  BasisSpec spec_;
  Matrix coefficients_;
  std::vector<LeastSquaresSolution> diagnostics_;
};

/// Solves the n control-field regressions for a set of difference samples.
RecoveredControlField fit_control_field(const std::vector<DifferenceSample>& samples,
                                        const BasisSpec& spec, double ridge = 0.0);

struct ControlFieldRun {
  std::vector<ExperimentRecord> records;
  std::vector<DifferenceSample> samples;
  RecoveredControlField field;
};

ControlFieldRun run_control_recovery(const AffineSystem& system, const ExperimentPlan& plan,
                                     const BasisSpec& spec, unsigned threads = 1);

RecoveredControlField recover_control_field(const AffineSystem& system,
                                            const ExperimentPlan& plan, const BasisSpec& spec);

struct ConstantGainFit {
  Matrix gain;  // n x m
  std::vector<LeastSquaresSolution> diagnostics;
};

/// Solves the n constant-gain systems  dU b_j = dXdot_j. Throws
/// DegenerateDesign when dU has rank < m.
ConstantGainFit fit_constant_b(const std::vector<DifferenceSample>& samples);

Matrix recover_constant_b(const AffineSystem& system, const ExperimentPlan& plan);

struct DriftPhaseOptions {
  /// Free-run (u = 0) samples per anchor, spaced by the plan's sampling time.
  int free_run_samples = 200;
  /// Also regress on the perturbation records (x(t0), forward difference, u0).
  bool include_records = true;
};

/// Drift samples: central differences along u = 0 free runs from each anchor
/// (exact derivatives in exact mode) plus, optionally, the experiment records.
std::vector<DriftSample> collect_drift_samples(const AffineSystem& system,
                                               const ExperimentPlan& plan,
                                               const DriftPhaseOptions& options,
                                               std::span<const ExperimentRecord> records);

RecoveredDriftField fit_drift_field(const std::vector<DriftSample>& samples,
                                    const RecoveredControlField& control, const BasisSpec& spec,
                                    double ridge = 0.0);

/// When `records` is empty and options.include_records is set, the plan is run again.
RecoveredDriftField recover_drift_field(const AffineSystem& system, const ExperimentPlan& plan,
                                        const RecoveredControlField& control,
                                        const BasisSpec& spec,
                                        const DriftPhaseOptions& options = {},
                                        std::span<const ExperimentRecord> records = {});

struct ValidationReport {
  std::vector<Vector> sample_points;
  Matrix rmse;     // n x m
  Matrix max_abs;  // n x m
  /// points x (n*m), column j*m + s.
  Matrix true_values;
  Matrix recovered_values;
  int out_of_domain = 0;
  std::vector<double> condition_numbers;  // per output row of the fit

  Index sample_count() const { return static_cast<Index>(sample_points.size()); }
};

/// Compares the recovered field with the system's true g on fresh points drawn
/// from the system's domain (on the sphere for sphere systems).
ValidationReport validate_field(const RecoveredControlField& recovered, const AffineSystem& truth,
                                int num_points, std::uint64_t seed);
ValidationReport validate_field(const RecoveredControlField& recovered, const AffineSystem& truth,
                                const std::vector<Vector>& points);

struct ConvergenceRow {
  int perturbations = 0;
  double median_error = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double mean_error = 0.0;
  int trials = 0;
};

struct ConvergenceStudy {
  std::vector<ConvergenceRow> rows;
  /// errors(i, t): |Theta - Theta_hat| for N_values[i] in trial t.
  Matrix errors;
};

struct StudyOptions {
  /// Perturbation inputs are drawn i.i.d. uniform on [-input_bound, input_bound].
  double input_bound = 1.0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

/// For each N, every trial runs the base plan's anchors with a reference
/// input 0 and N random perturbations, once without noise (Theta) and once at
/// base_plan.noise_amplitude (Theta_hat), and records |Theta - Theta_hat|_2
/// over the stacked coefficients.
ConvergenceStudy noise_convergence_study(const AffineSystem& system,
                                         const ExperimentPlan& base_plan, const BasisSpec& spec,
                                         const std::vector<int>& N_values, int trials,
                                         std::uint64_t seed, const StudyOptions& options = {});

/// Linear-interpolation quantile of unsorted data, p in [0, 1].
double quantile(std::vector<double> values, double p);

}  // namespace ctrlid
