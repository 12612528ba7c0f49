#include "ctrlid/recovery.hpp"

#include "ctrlid/errors.hpp"
#include "ctrlid/seed.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

namespace ctrlid {

RecoveredControlField::RecoveredControlField(BasisSpec spec, Index state_dim, Index input_dim,
                                             std::vector<Vector> output_coefficients,
                                             std::vector<LeastSquaresSolution> diagnostics)
    : spec_(std::move(spec)),
      n_(state_dim),
      m_(input_dim),
      coefficients_(std::move(output_coefficients)),
      diagnostics_(std::move(diagnostics)) {
  if (static_cast<Index>(coefficients_.size()) != n_) {
    throw InvalidArgument("recovered field needs one coefficient vector per output");
  }
  for (Index j = 0; j < n_; ++j) {
    Index offset = 0;
    for (Index s = 0; s < m_; ++s) {
      entry_offsets_.push_back(offset);
      offset += feature_count(spec_.for_entry(j, s, m_));
    }
    if (coefficients_[static_cast<std::size_t>(j)].size() != offset) {
      throw InvalidArgument("output " + std::to_string(j) + " has " +
                            std::to_string(coefficients_[static_cast<std::size_t>(j)].size()) +
                            " coefficients, basis needs " + std::to_string(offset));
    }
  }
}

const Vector& RecoveredControlField::output_coefficients(Index j) const {
  if (j < 0 || j >= n_) throw InvalidArgument("output index out of range");
  return coefficients_[static_cast<std::size_t>(j)];
}

Vector RecoveredControlField::entry_coefficients(Index j, Index s) const {
  if (s < 0 || s >= m_) throw InvalidArgument("input index out of range");
  const Vector& c = output_coefficients(j);
  const Index offset = entry_offsets_[static_cast<std::size_t>(j * m_ + s)];
  return c.segment(offset, feature_count(entry_basis(j, s)));
}

double RecoveredControlField::entry(Index j, Index s, const Vector& x) const {
  return entry_coefficients(j, s).dot(eval_basis(entry_basis(j, s), x));
}

Matrix RecoveredControlField::evaluate(const Vector& x) const {
  if (x.size() != n_) throw InvalidArgument("state has the wrong length for the recovered field");
  Matrix g(n_, m_);
  if (spec_.entry_orders.empty()) {
    const FeatureVector phi = eval_basis(spec_, x);
    const Index F = phi.size();
    for (Index j = 0; j < n_; ++j) {
      for (Index s = 0; s < m_; ++s) {
        g(j, s) = coefficients_[static_cast<std::size_t>(j)].segment(s * F, F).dot(phi);
      }
    }
  } else {
    for (Index j = 0; j < n_; ++j) {
      for (Index s = 0; s < m_; ++s) g(j, s) = entry(j, s, x);
    }
  }
  return g;
}

Vector RecoveredControlField::stacked_coefficients() const {
  Index total = 0;
  for (const auto& c : coefficients_) total += c.size();
  Vector out(total);
  Index pos = 0;
  for (const auto& c : coefficients_) {
    out.segment(pos, c.size()) = c;
    pos += c.size();
  }
  return out;
}

RecoveredDriftField::RecoveredDriftField(BasisSpec spec, Matrix coefficients,
                                         std::vector<LeastSquaresSolution> diagnostics)
    : spec_(std::move(spec)),
      coefficients_(std::move(coefficients)),
      diagnostics_(std::move(diagnostics)) {
  if (coefficients_.cols() != feature_count(spec_)) {
    throw InvalidArgument("drift coefficients do not match the basis size");
  }
}

Vector RecoveredDriftField::evaluate(const Vector& x) const {
  return coefficients_ * eval_basis(spec_, x);
}

namespace {

void check_nondegenerate(const std::vector<DifferenceSample>& samples) {
  if (samples.empty()) throw InsufficientData("no difference samples");
  const bool all_zero = std::all_of(samples.begin(), samples.end(),
                                    [](const DifferenceSample& s) { return s.delta_u.isZero(0.0); });
  if (all_zero) throw DegenerateDesign("every input difference is zero; the design carries no information");
}

}  // namespace

RecoveredControlField fit_control_field(const std::vector<DifferenceSample>& samples,
                                        const BasisSpec& spec, double ridge) {
  check_nondegenerate(samples);
  const Index n = samples.front().delta_xdot.size();
  const Index m = samples.front().delta_u.size();
  std::vector<Vector> coefficients;
  std::vector<LeastSquaresSolution> diagnostics;
  for (Index j = 0; j < n; ++j) {
    try {
      auto solution = solve_least_squares(assemble_control_lrp(samples, spec, j), ridge);
      coefficients.push_back(solution.coefficients);
      diagnostics.push_back(std::move(solution));
    } catch (const Error& e) {
      throw StageError("control regression (output " + std::to_string(j + 1) + ")", std::nullopt,
                       std::nullopt, e.what());
    }
  }
  return RecoveredControlField(spec, n, m, std::move(coefficients), std::move(diagnostics));
}

ControlFieldRun run_control_recovery(const AffineSystem& system, const ExperimentPlan& plan,
                                     const BasisSpec& spec, unsigned threads) {
  if (spec.dimension() != system.state_dim()) {
    throw InvalidArgument("basis dimension differs from the system's state dimension");
  }
  auto records = run_plan(system, plan, threads);
  auto samples = collect_differences(plan, records);
  auto field = fit_control_field(samples, spec);
  return ControlFieldRun{std::move(records), std::move(samples), std::move(field)};
}

RecoveredControlField recover_control_field(const AffineSystem& system,
                                            const ExperimentPlan& plan, const BasisSpec& spec) {
  return run_control_recovery(system, plan, spec).field;
}

ConstantGainFit fit_constant_b(const std::vector<DifferenceSample>& samples) {
  check_nondegenerate(samples);
  const Index n = samples.front().delta_xdot.size();
  const Index m = samples.front().delta_u.size();

  ConstantGainFit fit;
  fit.gain.resize(n, m);
  for (Index j = 0; j < n; ++j) {
    const auto problem = assemble_constant_b_lrp(samples, j);
    auto solution = solve_least_squares(problem);
    if (solution.rank < m) {
      Eigen::JacobiSVD<Matrix> svd(problem.design, Eigen::ComputeFullV);
      std::ostringstream msg;
      msg << "input-difference matrix has rank " << solution.rank << " < " << m
          << "; unexcited directions:";
      for (Index c = solution.rank; c < m; ++c) {
        msg << " (" << svd.matrixV().col(c).transpose().format(Eigen::IOFormat(6, 0, ", ")) << ")";
      }
      throw DegenerateDesign(msg.str());
    }
    fit.gain.row(j) = solution.coefficients.transpose();
    fit.diagnostics.push_back(std::move(solution));
  }
  return fit;
}

Matrix recover_constant_b(const AffineSystem& system, const ExperimentPlan& plan) {
  const auto records = run_plan(system, plan);
  return fit_constant_b(collect_differences(plan, records)).gain;
}

std::vector<DriftSample> collect_drift_samples(const AffineSystem& system,
                                               const ExperimentPlan& plan,
                                               const DriftPhaseOptions& options,
                                               std::span<const ExperimentRecord> records) {
  plan.validate(system);
  if (options.free_run_samples < 0 || options.free_run_samples == 1 ||
      options.free_run_samples == 2) {
    throw InvalidArgument("free runs need 0 or at least 3 samples");
  }
  const Index n = system.state_dim();
  const Index m = system.input_dim();
  const double ts = plan.sampling_time;
  const AffineSystem noisy = system.with_noise(plan.noise_amplitude);
  std::vector<DriftSample> samples;

  if (options.free_run_samples > 0) {
    const int K = options.free_run_samples;
    const auto per_sample = static_cast<Index>(std::llround(ts / plan.integrator_step));
    const Vector zero = Vector::Zero(m);
    for (std::size_t j = 0; j < plan.anchors.size(); ++j) {
      const int aj = static_cast<int>(j);
      Trajectory traj;
      try {
        const double horizon = double(K - 1) * ts;
        traj = integrate(noisy, plan.anchors[j], ControlSignal::constant(zero, horizon, plan.t0),
                         plan.t0, plan.t0 + horizon, plan.integrator_step,
                         derive_seed(plan.seed, {0x6472696674ULL, std::uint64_t(aj)}));
      } catch (const Error& e) {
        throw StageError("drift free run", aj, std::nullopt, e.what());
      }
      for (int i = 0; i < K; ++i) {
        const Vector x = traj.state(i * per_sample);
        const double t = traj.times[static_cast<std::size_t>(i * per_sample)];
        Vector xdot;
        if (plan.derivative_mode == DerivativeMode::exact) {
          xdot = evaluate_rhs(system, x, zero, t);
        } else if (i > 0 && i + 1 < K) {
          xdot = (traj.state((i + 1) * per_sample) - traj.state((i - 1) * per_sample)) / (2.0 * ts);
        } else {
          continue;
        }
        samples.push_back(DriftSample{x, std::move(xdot), zero, RowProvenance{aj, -1}});
      }
    }
  }

  if (options.include_records) {
    for (const auto& r : records) {
      if (r.x_t0.size() != n) throw InvalidArgument("experiment record has the wrong dimension");
      samples.push_back(
          DriftSample{r.x_t0, r.derivative_estimate, r.u0, RowProvenance{r.anchor_index, r.input_index}});
    }
  }
  if (samples.empty()) throw InsufficientData("drift phase produced no samples");
  return samples;
}

RecoveredDriftField fit_drift_field(const std::vector<DriftSample>& samples,
                                    const RecoveredControlField& control, const BasisSpec& spec,
                                    double ridge) {
  if (samples.empty()) throw InsufficientData("no drift samples");
  const Index n = samples.front().state.size();
  const ControlGainFn gain = [&control](const Vector& x) { return control.evaluate(x); };
  Matrix coefficients(n, feature_count(spec));
  std::vector<LeastSquaresSolution> diagnostics;
  for (Index j = 0; j < n; ++j) {
    try {
      auto solution = solve_least_squares(assemble_drift_lrp(samples, gain, spec, j), ridge);
      coefficients.row(j) = solution.coefficients.transpose();
      diagnostics.push_back(std::move(solution));
    } catch (const Error& e) {
      throw StageError("drift regression (output " + std::to_string(j + 1) + ")", std::nullopt,
                       std::nullopt, e.what());
    }
  }
  return RecoveredDriftField(spec, std::move(coefficients), std::move(diagnostics));
}

RecoveredDriftField recover_drift_field(const AffineSystem& system, const ExperimentPlan& plan,
                                        const RecoveredControlField& control,
                                        const BasisSpec& spec, const DriftPhaseOptions& options,
                                        std::span<const ExperimentRecord> records) {
  std::vector<ExperimentRecord> rerun;
  if (options.include_records && records.empty()) {
    rerun = run_plan(system, plan);
    records = rerun;
  }
  return fit_drift_field(collect_drift_samples(system, plan, options, records), control, spec);
}

ValidationReport validate_field(const RecoveredControlField& recovered, const AffineSystem& truth,
                                int num_points, std::uint64_t seed) {
  if (num_points < 1) throw InvalidArgument("validation needs at least one point");
  return validate_field(recovered, truth,
                        sample_states(truth, num_points, AnchorSampler::uniform, seed));
}

ValidationReport validate_field(const RecoveredControlField& recovered, const AffineSystem& truth,
                                const std::vector<Vector>& points) {
  const Index n = truth.state_dim();
  const Index m = truth.input_dim();
  if (recovered.state_dim() != n || recovered.input_dim() != m) {
    throw InvalidArgument("recovered field is " + std::to_string(recovered.state_dim()) + "x" +
                          std::to_string(recovered.input_dim()) + ", truth is " +
                          std::to_string(n) + "x" + std::to_string(m));
  }
  if (points.empty()) throw InvalidArgument("validation needs at least one point");

  ValidationReport report;
  report.sample_points = points;
  const auto P = static_cast<Index>(points.size());
  report.true_values.resize(P, n * m);
  report.recovered_values.resize(P, n * m);
  for (Index p = 0; p < P; ++p) {
    const Vector& x = points[static_cast<std::size_t>(p)];
    if (!in_basis_domain(recovered.basis(), x)) ++report.out_of_domain;
    const Matrix g = truth.control_matrix(x);
    const Matrix ghat = recovered.evaluate(x);
    for (Index j = 0; j < n; ++j) {
      for (Index s = 0; s < m; ++s) {
        report.true_values(p, j * m + s) = g(j, s);
        report.recovered_values(p, j * m + s) = ghat(j, s);
      }
    }
  }
  const Matrix err = (report.recovered_values - report.true_values).cwiseAbs();
  report.rmse.resize(n, m);
  report.max_abs.resize(n, m);
  for (Index j = 0; j < n; ++j) {
    for (Index s = 0; s < m; ++s) {
      const auto col = err.col(j * m + s);
      report.rmse(j, s) = std::sqrt(col.squaredNorm() / double(P));
      report.max_abs(j, s) = col.maxCoeff();
    }
  }
  for (const auto& d : recovered.diagnostics()) report.condition_numbers.push_back(d.condition_number);
  return report;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * double(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - double(lo)) * (values[hi] - values[lo]);
}

ConvergenceStudy noise_convergence_study(const AffineSystem& system,
                                         const ExperimentPlan& base_plan, const BasisSpec& spec,
                                         const std::vector<int>& N_values, int trials,
                                         std::uint64_t seed, const StudyOptions& options) {
  if (trials < 1) throw InvalidArgument("the study needs at least one trial");
  if (N_values.empty()) throw InvalidArgument("the study needs at least one N");
  for (std::size_t i = 0; i < N_values.size(); ++i) {
    if (N_values[i] < 1) throw InvalidArgument("N values must be positive");
    if (i > 0 && N_values[i] <= N_values[i - 1]) throw InvalidArgument("N values must ascend");
  }
  if (!(options.input_bound > 0.0)) throw InvalidArgument("input bound must be positive");
  base_plan.validate(system);
  const Index m = system.input_dim();

  ConvergenceStudy study;
  study.errors.resize(static_cast<Index>(N_values.size()), trials);

  auto run_trial = [&](int trial) {
    for (std::size_t i = 0; i < N_values.size(); ++i) {
      const int N = N_values[i];
      std::mt19937_64 rng(derive_seed(seed, {std::uint64_t(trial), std::uint64_t(N), 0}));
      std::uniform_real_distribution<double> draw(-options.input_bound, options.input_bound);
      std::vector<Vector> inputs{Vector::Zero(m)};
      for (int k = 0; k < N; ++k) {
        Vector u(m);
        for (Index s = 0; s < m; ++s) u[s] = draw(rng);
        inputs.push_back(std::move(u));
      }
      ExperimentPlan noisy = base_plan;
      noisy.input_sets.assign(base_plan.anchors.size(), inputs);
      noisy.reference_index = 0;
      noisy.seed = derive_seed(seed, {std::uint64_t(trial), std::uint64_t(N), 1});
      ExperimentPlan clean = noisy;
      clean.noise_amplitude = 0.0;

      const Vector theta =
          fit_control_field(collect_differences(clean, run_plan(system, clean)), spec)
              .stacked_coefficients();
      const Vector theta_hat =
          fit_control_field(collect_differences(noisy, run_plan(system, noisy)), spec)
              .stacked_coefficients();
      study.errors(static_cast<Index>(i), trial) = (theta - theta_hat).norm();
    }
  };

  unsigned workers = options.threads ? options.threads : std::thread::hardware_concurrency();
  workers = std::max(1u, std::min<unsigned>(workers, unsigned(trials)));
  std::vector<std::exception_ptr> failures(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (int t = int(w); t < trials; t += int(workers)) run_trial(t);
        } catch (...) {
          failures[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  for (std::size_t i = 0; i < N_values.size(); ++i) {
    const auto row = study.errors.row(static_cast<Index>(i));
    std::vector<double> errs(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t) errs[std::size_t(t)] = row(t);
    ConvergenceRow r;
    r.perturbations = N_values[i];
    r.median_error = quantile(errs, 0.5);
    r.q25 = quantile(errs, 0.25);
    r.q75 = quantile(errs, 0.75);
    r.mean_error = row.mean();
    r.trials = trials;
    study.rows.push_back(r);
  }
  return study;
}

}  // namespace ctrlid
