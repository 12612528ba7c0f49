#include "ctrlid/dynamics.hpp"

#include "ctrlid/errors.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>

namespace ctrlid {

namespace {

void require_dim(const Vector& v, Index expected, const char* what) {
  if (v.size() != expected) {
    throw InvalidArgument(std::string(what) + " has length " + std::to_string(v.size()) +
                          ", expected " + std::to_string(expected));
  }
}

// Number of dt steps spanning `span`, which must be an integer multiple of dt
// to within 1e-12 s.
long long whole_steps(double span, double dt, const char* what) {
  const double ratio = span / dt;
  const long long steps = std::llround(ratio);
  if (steps < 1 || std::abs(double(steps) * dt - span) > 1e-12) {
    throw InvalidArgument(std::string(what) + " (" + std::to_string(span) +
                          " s) is not a whole number of integrator steps of " +
                          std::to_string(dt) + " s");
  }
  return steps;
}

// Shared RK4 driver; `observe(k, t, x, u)` sees every grid point.
template <class Observer>
Vector run_rk4(const AffineSystem& system, const Vector& x0, const ControlSignal& signal,
               double t0, double tf, double dt, std::uint64_t noise_seed, Observer&& observe) {
  const Index n = system.state_dim();
  require_dim(x0, n, "initial state");
  if (signal.input_dim() != system.input_dim()) {
    throw InvalidArgument("control signal has " + std::to_string(signal.input_dim()) +
                          " inputs, system expects " + std::to_string(system.input_dim()));
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("integrator step must be positive");
  if (!(tf > t0)) throw InvalidArgument("integration horizon must satisfy tf > t0");
  if (dt > signal.segment_duration() + 1e-15) {
    throw InvalidArgument("integrator step exceeds the control segment duration");
  }
  if (std::abs(signal.start_time() - t0) > 1e-12) {
    throw InvalidArgument("control signal does not start at t0");
  }
  if (tf > signal.end_time() + 1e-12) {
    throw InvalidArgument("integration horizon extends past the control signal");
  }
  const long long steps = whole_steps(tf - t0, dt, "integration horizon");
  const long long per_segment = whole_steps(signal.segment_duration(), dt, "control segment");

  const double amplitude = system.noise_amplitude();
  std::mt19937_64 rng(noise_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  auto input_for_step = [&](long long k) -> Vector {
    const long long seg = std::min<long long>(k / per_segment, signal.segments() - 1);
    return signal.value_at(t0 + double(seg) * signal.segment_duration());
  };

  Vector x = x0;
  Vector u = input_for_step(0);
  observe(0LL, t0, x, u);
  const double half = 0.5 * dt;
  for (long long k = 0; k < steps; ++k) {
    const double t = t0 + double(k) * dt;
    u = input_for_step(k);
    const Vector k1 = evaluate_rhs(system, x, u, t);
    const Vector k2 = evaluate_rhs(system, x + half * k1, u, t + half);
    const Vector k3 = evaluate_rhs(system, x + half * k2, u, t + half);
    const Vector k4 = evaluate_rhs(system, x + dt * k3, u, t + dt);
    Vector next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (amplitude > 0.0) {
      for (Index i = 0; i < n; ++i) next[i] += dt * amplitude * unit(rng);
    }
    if (!next.allFinite()) {
      throw IntegrationDiverged(t, "integration diverged after t = " + std::to_string(t) + " s");
    }
    x = std::move(next);
    observe(k + 1, t0 + double(k + 1) * dt, x, input_for_step(std::min(k + 1, steps - 1)));
  }
  return x;
}

}  // namespace

AffineSystem::AffineSystem(Index state_dim, DriftFn drift,
                           std::vector<ControlFieldFn> control_fields, Box state_domain,
                           StateManifold manifold, double noise_amplitude)
    : n_(state_dim),
      drift_(std::make_shared<const DriftFn>(std::move(drift))),
      fields_(std::make_shared<const std::vector<ControlFieldFn>>(std::move(control_fields))),
      domain_(std::move(state_domain)),
      manifold_(manifold),
      noise_amplitude_(noise_amplitude) {
  if (n_ < 1) throw InvalidArgument("state dimension must be positive");
  if (fields_->empty()) throw InvalidArgument("input dimension must be positive");
  if (!*drift_) throw InvalidArgument("drift evaluator is empty");
  for (const auto& g : *fields_) {
    if (!g) throw InvalidArgument("control field evaluator is empty");
  }
  if (domain_.dim() != n_) throw InvalidArgument("state domain dimension differs from n");
  if (!(noise_amplitude_ >= 0.0)) throw InvalidArgument("noise amplitude must be nonnegative");
  if (manifold_ == StateManifold::unit_sphere && n_ < 2) {
    throw InvalidArgument("unit-sphere manifold needs n >= 2");
  }
}

Vector AffineSystem::drift(const Vector& x, double t) const {
  require_dim(x, n_, "state");
  Vector v = (*drift_)(x, t);
  require_dim(v, n_, "drift value");
  return v;
}

Vector AffineSystem::control_field(Index k, const Vector& x) const {
  if (k < 0 || k >= input_dim()) {
    throw InvalidArgument("control field index " + std::to_string(k) + " out of range");
  }
  require_dim(x, n_, "state");
  Vector v = (*fields_)[static_cast<std::size_t>(k)](x);
  require_dim(v, n_, "control field value");
  return v;
}

Matrix AffineSystem::control_matrix(const Vector& x) const {
  Matrix g(n_, input_dim());
  for (Index k = 0; k < input_dim(); ++k) g.col(k) = control_field(k, x);
  return g;
}

AffineSystem AffineSystem::with_drift(DriftFn drift) const {
  AffineSystem copy = *this;
  if (!drift) throw InvalidArgument("drift evaluator is empty");
  copy.drift_ = std::make_shared<const DriftFn>(std::move(drift));
  return copy;
}

AffineSystem AffineSystem::with_noise(double amplitude) const {
  if (!(amplitude >= 0.0)) throw InvalidArgument("noise amplitude must be nonnegative");
  AffineSystem copy = *this;
  copy.noise_amplitude_ = amplitude;
  return copy;
}

ControlSignal::ControlSignal(Matrix values, double segment_duration, double t0)
    : values_(std::move(values)), segment_duration_(segment_duration), t0_(t0) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw InvalidArgument("control signal needs at least one segment and one input");
  }
  if (!(segment_duration_ > 0.0) || !std::isfinite(segment_duration_)) {
    throw InvalidArgument("segment duration must be positive");
  }
  if (!values_.allFinite()) throw InvalidArgument("control values must be finite");
}

ControlSignal ControlSignal::constant(const Vector& u, double duration, double t0) {
  return ControlSignal(Matrix(u.transpose()), duration, t0);
}

Vector ControlSignal::value_at(double t) const {
  const double rel = (t - t0_) / segment_duration_;
  Index row = rel <= 0.0 ? 0 : static_cast<Index>(std::floor(rel));
  if (row >= values_.rows()) row = values_.rows() - 1;
  return values_.row(row).transpose();
}

Vector evaluate_rhs(const AffineSystem& system, const Vector& x, const Vector& u, double t) {
  require_dim(x, system.state_dim(), "state");
  require_dim(u, system.input_dim(), "input");
  Vector rhs = system.drift(x, t);
  for (Index k = 0; k < system.input_dim(); ++k) {
    if (u[k] != 0.0) rhs += system.control_field(k, x) * u[k];
  }
  return rhs;
}

Trajectory integrate(const AffineSystem& system, const Vector& x0, const ControlSignal& signal,
                     double t0, double tf, double dt, std::uint64_t noise_seed) {
  const long long steps = whole_steps(tf - t0, dt, "integration horizon");
  Trajectory traj;
  traj.times.reserve(static_cast<std::size_t>(steps + 1));
  traj.states.resize(steps + 1, system.state_dim());
  traj.inputs.resize(steps + 1, system.input_dim());
  run_rk4(system, x0, signal, t0, tf, dt, noise_seed,
          [&](long long k, double t, const Vector& x, const Vector& u) {
            traj.times.push_back(t);
            traj.states.row(k) = x.transpose();
            traj.inputs.row(k) = u.transpose();
          });
  return traj;
}

Vector propagate(const AffineSystem& system, const Vector& x0, const ControlSignal& signal,
                 double t0, double tf, double dt, std::uint64_t noise_seed) {
  return run_rk4(system, x0, signal, t0, tf, dt, noise_seed,
                 [](long long, double, const Vector&, const Vector&) {});
}

AffineSystem make_linear_system(const Matrix& A, const Matrix& B) {
  return make_linear_system(A, B, Box::cube(A.rows(), -1.0, 1.0));
}

AffineSystem make_linear_system(const Matrix& A, const Matrix& B, Box domain) {
  if (A.rows() != A.cols()) throw InvalidArgument("A must be square");
  if (B.rows() != A.rows()) {
    throw InvalidArgument("B has " + std::to_string(B.rows()) + " rows, A is " +
                          std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
  }
  if (B.cols() < 1) throw InvalidArgument("B needs at least one column");
  std::vector<ControlFieldFn> fields;
  for (Index k = 0; k < B.cols(); ++k) {
    Vector column = B.col(k);
    fields.emplace_back([column](const Vector&) { return column; });
  }
  return AffineSystem(
      A.rows(), [A](const Vector& x, double) -> Vector { return A * x; }, std::move(fields),
      std::move(domain));
}

AffineSystem make_bloch_system(double epsilon, double omega) {
  auto drift = [omega](const Vector& x, double) -> Vector {
    return Eigen::Vector3d(-omega * x[1], omega * x[0], 0.0);
  };
  std::vector<ControlFieldFn> fields{
      [epsilon](const Vector& x) -> Vector {
        return Eigen::Vector3d(epsilon * x[2], 0.0, -epsilon * x[0]);
      },
      [epsilon](const Vector& x) -> Vector {
        return Eigen::Vector3d(0.0, -epsilon * x[2], epsilon * x[1]);
      }};
  return AffineSystem(3, std::move(drift), std::move(fields), Box::cube(3, -1.0, 1.0),
                      StateManifold::unit_sphere);
}

AffineSystem make_phase_oscillator(ScalarFn prc, ScalarFn omega_fn, double noise_amplitude) {
  if (!prc || !omega_fn) throw InvalidArgument("phase model needs a PRC and a frequency");
  auto drift = [omega_fn = std::move(omega_fn)](const Vector&, double t) -> Vector {
    return Vector::Constant(1, omega_fn(t));
  };
  std::vector<ControlFieldFn> fields{[prc = std::move(prc)](const Vector& x) -> Vector {
    return Vector::Constant(1, prc(x[0]));
  }};
  return AffineSystem(1, std::move(drift), std::move(fields),
                      Box::cube(1, 0.0, 2.0 * std::numbers::pi), StateManifold::box,
                      noise_amplitude);
}

}  // namespace ctrlid
