#pragma once

// Ground-truth input-affine systems  xdot = f(x, t) + sum_k g_k(x) u_k  and a
// fixed-step RK4 integrator used to run perturbation experiments on them.

#include "ctrlid/types.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace ctrlid {

/// Drift evaluator. The time argument is the integrator clock; autonomous
/// systems ignore it.
using DriftFn = std::function<Vector(const Vector& x, double t)>;
using ControlFieldFn = std::function<Vector(const Vector& x)>;
using ScalarFn = std::function<double(double)>;

/// Where anchor and validation points are drawn from inside the state box.
enum class StateManifold { box, unit_sphere };

class AffineSystem {
 public:
  AffineSystem(Index state_dim, DriftFn drift, std::vector<ControlFieldFn> control_fields,
               Box state_domain, StateManifold manifold = StateManifold::box,
               double noise_amplitude = 0.0);

  Index state_dim() const noexcept { return n_; }
  Index input_dim() const noexcept { return static_cast<Index>(fields_->size()); }
  const Box& state_domain() const noexcept { return domain_; }
  StateManifold manifold() const noexcept { return manifold_; }

  /// Amplitude of the additive per-step disturbance applied by integrate().
  double noise_amplitude() const noexcept { return noise_amplitude_; }

  Vector drift(const Vector& x, double t = 0.0) const;
  Vector control_field(Index k, const Vector& x) const;
  /// The n x m gain matrix g(x) with columns g_k(x).
  Matrix control_matrix(const Vector& x) const;

  /// Same control fields, different drift.
  AffineSystem with_drift(DriftFn drift) const;
  AffineSystem with_noise(double amplitude) const;

 private:
  Index n_;
  std::shared_ptr<const DriftFn> drift_;
  std::shared_ptr<const std::vector<ControlFieldFn>> fields_;
  Box domain_;
  StateManifold manifold_;
  double noise_amplitude_;
};

/// Piecewise-constant input: row r of `values` holds on
/// [t0 + r*segment_duration, t0 + (r+1)*segment_duration).
class ControlSignal {
 public:
  ControlSignal(Matrix values, double segment_duration, double t0 = 0.0);

  /// Single segment held for `duration`.
  static ControlSignal constant(const Vector& u, double duration, double t0 = 0.0);

  Index input_dim() const noexcept { return values_.cols(); }
  Index segments() const noexcept { return values_.rows(); }
  double segment_duration() const noexcept { return segment_duration_; }
  double start_time() const noexcept { return t0_; }
  double end_time() const noexcept { return t0_ + segment_duration_ * double(values_.rows()); }

  /// Row floor((t - t0)/segment_duration), clamped to the last segment.
  Vector value_at(double t) const;

 private:
  Matrix values_;
  double segment_duration_;
  double t0_;
};

struct Trajectory {
  std::vector<double> times;
  Matrix states;  // len(times) x n
  Matrix inputs;  // len(times) x m

  Index size() const noexcept { return static_cast<Index>(times.size()); }
  Vector state(Index k) const { return states.row(k).transpose(); }
  Vector final_state() const { return state(size() - 1); }
};

/// f(x, t) + g(x) u.
Vector evaluate_rhs(const AffineSystem& system, const Vector& x, const Vector& u,
                    double t = 0.0);

/// Classical RK4 over [t0, tf] with step dt. When the system carries noise,
/// amplitude * xi (xi ~ U[-1, 1], one draw per component per step) is added to
/// the derivative of each step; the draws come from a stream seeded by
/// `noise_seed`.
Trajectory integrate(const AffineSystem& system, const Vector& x0, const ControlSignal& signal,
                     double t0, double tf, double dt, std::uint64_t noise_seed = 0);

/// Same stepping as integrate() but only returns the terminal state.
Vector propagate(const AffineSystem& system, const Vector& x0, const ControlSignal& signal,
                 double t0, double tf, double dt, std::uint64_t noise_seed = 0);

/// drift(x) = A x, control_fields[k](x) = column k of B. Domain defaults to [-1, 1]^n.
AffineSystem make_linear_system(const Matrix& A, const Matrix& B);
AffineSystem make_linear_system(const Matrix& A, const Matrix& B, Box domain);

/// Bloch dynamics on the unit sphere:
///   f = (-w x2, w x1, 0), g1 = (e x3, 0, -e x1), g2 = (0, -e x3, e x2).
AffineSystem make_bloch_system(double epsilon, double omega);

/// Phase model  theta' = omega(t) + prc(theta) u + eta  on [0, 2 pi].
AffineSystem make_phase_oscillator(ScalarFn prc, ScalarFn omega_fn, double noise_amplitude);

}  // namespace ctrlid
