#pragma once

// Per-output-dimension linear regression problems and their least-squares
// solution.

#include "ctrlid/basis.hpp"
#include "ctrlid/experiment.hpp"
#include "ctrlid/types.hpp"

#include <functional>
#include <vector>

namespace ctrlid {

struct RowProvenance {
  int anchor_index = -1;
  int perturbation_index = -1;

  bool operator==(const RowProvenance&) const = default;
};

/// Unknown (output j, input s, basis index k). Drift columns use input = -1.
struct ColumnLabel {
  int output = 0;
  int input = 0;
  int basis_index = 0;

  bool operator==(const ColumnLabel&) const = default;
};

struct RegressionProblem {
  Matrix design;
  Vector target;
  std::vector<RowProvenance> row_provenance;
  std::vector<ColumnLabel> column_labels;

  Index rows() const { return design.rows(); }
  Index cols() const { return design.cols(); }
  /// Shape consistency and finiteness; throws InvalidArgument.
  void validate() const;
};

struct LeastSquaresSolution {
  Vector coefficients;
  double residual_norm = 0.0;
  /// sigma_max / sigma_min of the design; +inf when rank deficient or underdetermined.
  double condition_number = 0.0;
  Index rank = 0;
  Vector singular_values;

  bool full_rank(Index columns) const { return rank == columns; }
};

/// Relative cutoff below which singular values count as zero.
inline constexpr double kRankTolerance = 1e-10;

/// One row per sample: phi_k(anchor) * delta_u_s in column s * F + k, target
/// delta_xdot_j. Never touches a drift evaluation.
RegressionProblem assemble_control_lrp(const std::vector<DifferenceSample>& samples,
                                       const BasisSpec& spec, Index output_dim);

/// Constant-gain special case: design is the stacked delta_u rows, unknowns are row j of B.
RegressionProblem assemble_constant_b_lrp(const std::vector<DifferenceSample>& samples,
                                          Index output_dim);

struct DriftSample {
  Vector state;
  Vector xdot;
  Vector input;
  RowProvenance provenance;
};

using ControlGainFn = std::function<Matrix(const Vector&)>;

/// Target xdot_j - sum_s g_js(x) u_s, design row eval_basis(spec, x).
RegressionProblem assemble_drift_lrp(const std::vector<DriftSample>& samples,
                                     const ControlGainFn& control_gain, const BasisSpec& spec,
                                     Index output_dim);

/// Minimum-norm least squares through a thin SVD. A positive `ridge` solves
/// min |Dc - b|^2 + ridge |c|^2 instead; diagnostics always describe D itself.
LeastSquaresSolution solve_least_squares(const RegressionProblem& problem, double ridge = 0.0);

}  // namespace ctrlid
