#include "ctrlid/regression.hpp"

#include "ctrlid/errors.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

namespace ctrlid {

void RegressionProblem::validate() const {
  if (design.rows() != target.size()) {
    throw InvalidArgument("design has " + std::to_string(design.rows()) + " rows, target has " +
                          std::to_string(target.size()) + " entries");
  }
  if (design.rows() == 0 || design.cols() == 0) throw InsufficientData("regression problem is empty");
  if (!design.allFinite() || !target.allFinite()) {
    throw InvalidArgument("regression problem contains non-finite entries");
  }
  if (!row_provenance.empty() && static_cast<Index>(row_provenance.size()) != design.rows()) {
    throw InvalidArgument("row provenance does not match the design row count");
  }
  if (!column_labels.empty() && static_cast<Index>(column_labels.size()) != design.cols()) {
    throw InvalidArgument("column labels do not match the design column count");
  }
}

namespace {

void check_samples(const std::vector<DifferenceSample>& samples, Index output_dim) {
  if (samples.empty()) throw InsufficientData("no difference samples to regress on");
  const Index n = samples.front().delta_xdot.size();
  const Index m = samples.front().delta_u.size();
  if (output_dim < 0 || output_dim >= n) {
    throw InvalidArgument("output dimension " + std::to_string(output_dim) + " outside [0, " +
                          std::to_string(n) + ")");
  }
  for (const auto& s : samples) {
    if (s.delta_xdot.size() != n || s.delta_u.size() != m || s.anchor_state.size() != n) {
      throw InvalidArgument("difference samples have inconsistent dimensions");
    }
  }
}

}  // namespace

RegressionProblem assemble_control_lrp(const std::vector<DifferenceSample>& samples,
                                       const BasisSpec& spec, Index output_dim) {
  check_samples(samples, output_dim);
  const Index n = samples.front().delta_xdot.size();
  const Index m = samples.front().delta_u.size();
  if (spec.dimension() != n) {
    throw InvalidArgument("basis dimension " + std::to_string(spec.dimension()) +
                          " differs from state dimension " + std::to_string(n));
  }
  if (!spec.entry_orders.empty() && static_cast<Index>(spec.entry_orders.size()) != n * m) {
    throw InvalidArgument("per-entry orders must list n*m values");
  }

  std::vector<BasisSpec> entry_specs;
  std::vector<Index> offsets;
  Index cols = 0;
  for (Index s = 0; s < m; ++s) {
    entry_specs.push_back(spec.for_entry(output_dim, s, m));
    offsets.push_back(cols);
    cols += feature_count(entry_specs.back());
  }

  RegressionProblem problem;
  const auto rows = static_cast<Index>(samples.size());
  problem.design.resize(rows, cols);
  problem.target.resize(rows);
  problem.row_provenance.reserve(samples.size());
  for (Index s = 0; s < m; ++s) {
    const Index F = feature_count(entry_specs[static_cast<std::size_t>(s)]);
    for (Index k = 0; k < F; ++k) {
      problem.column_labels.push_back({int(output_dim), int(s), int(k)});
    }
  }

  for (Index r = 0; r < rows; ++r) {
    const auto& sample = samples[static_cast<std::size_t>(r)];
    for (Index s = 0; s < m; ++s) {
      const auto& es = entry_specs[static_cast<std::size_t>(s)];
      const FeatureVector phi = eval_basis(es, sample.anchor_state);
      problem.design.row(r).segment(offsets[static_cast<std::size_t>(s)], phi.size()) =
          (phi * sample.delta_u[s]).transpose();
    }
    problem.target[r] = sample.delta_xdot[output_dim];
    problem.row_provenance.push_back({sample.anchor_index, sample.perturbation_index});
  }
  problem.validate();
  return problem;
}

RegressionProblem assemble_constant_b_lrp(const std::vector<DifferenceSample>& samples,
                                          Index output_dim) {
  check_samples(samples, output_dim);
  const Index m = samples.front().delta_u.size();
  RegressionProblem problem;
  const auto rows = static_cast<Index>(samples.size());
  problem.design.resize(rows, m);
  problem.target.resize(rows);
  for (Index r = 0; r < rows; ++r) {
    const auto& sample = samples[static_cast<std::size_t>(r)];
    problem.design.row(r) = sample.delta_u.transpose();
    problem.target[r] = sample.delta_xdot[output_dim];
    problem.row_provenance.push_back({sample.anchor_index, sample.perturbation_index});
  }
  for (Index s = 0; s < m; ++s) problem.column_labels.push_back({int(output_dim), int(s), 0});
  problem.validate();
  return problem;
}

RegressionProblem assemble_drift_lrp(const std::vector<DriftSample>& samples,
                                     const ControlGainFn& control_gain, const BasisSpec& spec,
                                     Index output_dim) {
  if (samples.empty()) throw InsufficientData("no drift samples to regress on");
  if (!control_gain) throw InvalidArgument("drift regression needs a recovered control field");
  const Index n = samples.front().state.size();
  if (output_dim < 0 || output_dim >= n) {
    throw InvalidArgument("output dimension " + std::to_string(output_dim) + " outside [0, " +
                          std::to_string(n) + ")");
  }
  if (spec.dimension() != n) throw InvalidArgument("basis dimension differs from state dimension");

  const Index F = feature_count(spec);
  RegressionProblem problem;
  const auto rows = static_cast<Index>(samples.size());
  problem.design.resize(rows, F);
  problem.target.resize(rows);
  for (Index r = 0; r < rows; ++r) {
    const auto& sample = samples[static_cast<std::size_t>(r)];
    if (sample.state.size() != n || sample.xdot.size() != n) {
      throw InvalidArgument("drift samples have inconsistent dimensions");
    }
    problem.design.row(r) = eval_basis(spec, sample.state).transpose();
    double controlled = 0.0;
    if (sample.input.size() > 0 && !sample.input.isZero(0.0)) {
      const Matrix g = control_gain(sample.state);
      if (g.rows() != n || g.cols() != sample.input.size()) {
        throw InvalidArgument("recovered control field has the wrong shape");
      }
      controlled = g.row(output_dim).dot(sample.input);
    }
    problem.target[r] = sample.xdot[output_dim] - controlled;
    problem.row_provenance.push_back(sample.provenance);
  }
  for (Index k = 0; k < F; ++k) problem.column_labels.push_back({int(output_dim), -1, int(k)});
  problem.validate();
  return problem;
}

LeastSquaresSolution solve_least_squares(const RegressionProblem& problem, double ridge) {
  problem.validate();
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw InvalidArgument("ridge must be nonnegative");
  const Matrix& D = problem.design;

  Eigen::BDCSVD<Matrix> svd(D, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double sigma_max = sigma.size() > 0 ? sigma[0] : 0.0;
  const double cutoff = kRankTolerance * sigma_max;

  LeastSquaresSolution sol;
  sol.singular_values = sigma;
  const Vector projected = svd.matrixU().transpose() * problem.target;
  Vector scaled = Vector::Zero(sigma.size());
  for (Index i = 0; i < sigma.size(); ++i) {
    if (sigma[i] > cutoff && sigma[i] > 0.0) {
      ++sol.rank;
      scaled[i] = projected[i] * sigma[i] / (sigma[i] * sigma[i] + ridge);
    }
  }
  sol.coefficients = svd.matrixV() * scaled;
  sol.residual_norm = (D * sol.coefficients - problem.target).norm();

  const double sigma_min = sigma.size() > 0 ? sigma[sigma.size() - 1] : 0.0;
  if (D.rows() < D.cols() || sol.rank < D.cols() || sigma_min <= 0.0) {
    sol.condition_number = std::numeric_limits<double>::infinity();
  } else {
    sol.condition_number = sigma_max / sigma_min;
  }
  return sol;
}

}  // namespace ctrlid
