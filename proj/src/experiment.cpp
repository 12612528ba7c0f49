#include "ctrlid/experiment.hpp"

#include "ctrlid/errors.hpp"
#include "ctrlid/seed.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <thread>

namespace ctrlid {

std::size_t ExperimentPlan::experiment_count() const {
  std::size_t total = 0;
  for (const auto& set : input_sets) total += set.size();
  return total;
}

void ExperimentPlan::validate(const AffineSystem& system) const {
  if (anchors.empty()) throw InsufficientData("plan has no anchor states");
  if (input_sets.size() != anchors.size()) {
    throw InvalidArgument("plan has " + std::to_string(anchors.size()) + " anchors but " +
                          std::to_string(input_sets.size()) + " input sets");
  }
  if (!(sampling_time > 0.0) || !std::isfinite(sampling_time)) {
    throw InvalidArgument("sampling time must be positive");
  }
  if (!(integrator_step > 0.0) || integrator_step > sampling_time) {
    throw InvalidArgument("integrator step must satisfy 0 < dt <= ts");
  }
  const double steps = std::round(sampling_time / integrator_step);
  if (std::abs(steps * integrator_step - sampling_time) > 1e-12) {
    throw InvalidArgument("sampling time is not a whole number of integrator steps");
  }
  if (!(noise_amplitude >= 0.0)) throw InvalidArgument("noise amplitude must be nonnegative");
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const auto& a = anchors[j];
    if (a.size() != system.state_dim()) {
      throw InvalidArgument("anchor " + std::to_string(j) + " has length " +
                            std::to_string(a.size()) + ", expected " +
                            std::to_string(system.state_dim()));
    }
    if (!system.state_domain().contains(a)) {
      throw DomainError("anchor " + std::to_string(j) + " lies outside the state domain");
    }
    const auto& set = input_sets[j];
    if (set.size() < 2) {
      throw InsufficientData("anchor " + std::to_string(j) +
                             " needs a reference and at least one perturbation");
    }
    if (reference_index < 0 || static_cast<std::size_t>(reference_index) >= set.size()) {
      throw InvalidArgument("reference index " + std::to_string(reference_index) +
                            " out of range at anchor " + std::to_string(j));
    }
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set[i].size() != system.input_dim() || !set[i].allFinite()) {
        throw InvalidArgument("input " + std::to_string(i) + " at anchor " + std::to_string(j) +
                              " must be a finite vector of length " +
                              std::to_string(system.input_dim()));
      }
    }
  }
}

ExperimentRecord run_experiment(const AffineSystem& system, const Vector& anchor, const Vector& u0,
                                double sampling_time, double integrator_step,
                                double noise_amplitude, std::uint64_t seed, double t0) {
  if (anchor.size() != system.state_dim()) {
    throw InvalidArgument("anchor has length " + std::to_string(anchor.size()) + ", expected " +
                          std::to_string(system.state_dim()));
  }
  if (!system.state_domain().contains(anchor)) {
    throw DomainError("anchor lies outside the state domain");
  }
  if (!(sampling_time > 0.0)) throw InvalidArgument("sampling time must be positive");
  const AffineSystem run = system.with_noise(noise_amplitude);
  const auto signal = ControlSignal::constant(u0, sampling_time, t0);

  ExperimentRecord record;
  record.u0 = u0;
  record.x_t0 = anchor;
  record.x_t0_plus_ts =
      propagate(run, anchor, signal, t0, t0 + sampling_time, integrator_step, seed);
  record.derivative_estimate = estimate_derivative(record, sampling_time);
  return record;
}

Vector estimate_derivative(const ExperimentRecord& record, double sampling_time) {
  if (!(sampling_time > 0.0)) throw InvalidArgument("sampling time must be positive");
  if (record.x_t0.size() == 0 || record.x_t0.size() != record.x_t0_plus_ts.size()) {
    throw InvalidArgument("experiment record is incomplete");
  }
  return (record.x_t0_plus_ts - record.x_t0) / sampling_time;
}

std::vector<DifferenceSample> form_differences(const std::vector<ExperimentRecord>& records,
                                               int reference_index) {
  if (records.size() < 2) {
    throw InsufficientData("differencing needs at least 2 records, got " +
                           std::to_string(records.size()));
  }
  if (reference_index < 0 || static_cast<std::size_t>(reference_index) >= records.size()) {
    throw InvalidArgument("reference index " + std::to_string(reference_index) + " out of range");
  }
  const auto& ref = records[static_cast<std::size_t>(reference_index)];
  for (const auto& r : records) {
    if (r.anchor_index != ref.anchor_index) {
      throw ProtocolViolation("records from anchors " + std::to_string(ref.anchor_index) +
                              " and " + std::to_string(r.anchor_index) + " cannot be differenced");
    }
    if (r.x_t0 != ref.x_t0) {
      throw ProtocolViolation("records at anchor " + std::to_string(r.anchor_index) +
                              " do not share the initial state");
    }
    if (r.derivative_estimate.size() != ref.x_t0.size()) {
      throw InvalidArgument("record " + std::to_string(r.input_index) +
                            " has no derivative estimate");
    }
  }

  std::vector<DifferenceSample> samples;
  samples.reserve(records.size() - 1);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (static_cast<int>(i) == reference_index) continue;
    const auto& r = records[i];
    DifferenceSample s;
    s.anchor_state = ref.x_t0;
    s.anchor_index = ref.anchor_index;
    s.perturbation_index = r.input_index;
    s.delta_u = ref.u0 - r.u0;
    if (ref.control_component && r.control_component) {
      s.delta_xdot = *ref.control_component - *r.control_component;
    } else {
      s.delta_xdot = ref.derivative_estimate - r.derivative_estimate;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<Vector> design_inputs(int input_dim, int perturbations, double scale) {
  if (input_dim < 1) throw InvalidArgument("input dimension must be positive");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("input scale must be positive");
  if (perturbations < input_dim) {
    throw InfeasibleDesign("rank " + std::to_string(input_dim) + " needs at least " +
                           std::to_string(input_dim) + " perturbations, got " +
                           std::to_string(perturbations));
  }
  std::vector<Vector> inputs;
  inputs.reserve(static_cast<std::size_t>(perturbations) + 1);
  inputs.push_back(Vector::Zero(input_dim));
  for (int i = 1; i <= perturbations; ++i) {
    Vector u = Vector::Zero(input_dim);
    u[(i - 1) % input_dim] = -scale * double(1 + (i - 1) / input_dim);
    inputs.push_back(std::move(u));
  }
  return inputs;
}

std::uint64_t experiment_seed(std::uint64_t plan_seed, int anchor_index, int input_index) {
  return derive_seed(plan_seed, {0x657870ULL, std::uint64_t(anchor_index),
                                 std::uint64_t(input_index)});
}

std::vector<Vector> sample_states(const AffineSystem& system, int count, AnchorSampler sampler,
                                  std::uint64_t seed) {
  if (count < 0) throw InvalidArgument("sample count must be nonnegative");
  const Box& box = system.state_domain();
  const Index n = system.state_dim();
  if (box.dim() != n || !(box.side_lengths().array() > 0.0).all()) {
    throw DomainError("state domain is empty");
  }
  std::mt19937_64 rng(seed);
  std::vector<Vector> points;
  points.reserve(static_cast<std::size_t>(count));

  switch (sampler) {
    case AnchorSampler::user:
      throw InvalidArgument("the user sampler has no points to draw");
    case AnchorSampler::lattice: {
      if (n != 1) throw InvalidArgument("lattice sampling is only defined for 1-D domains");
      std::uniform_real_distribution<double> offset_dist(0.0, 1.0);
      const double offset = offset_dist(rng);
      const double width = box.upper[0] - box.lower[0];
      for (int j = 0; j < count; ++j) {
        points.push_back(Vector::Constant(1, box.lower[0] + (j + offset) * width / count));
      }
      break;
    }
    case AnchorSampler::uniform: {
      if (system.manifold() == StateManifold::unit_sphere) {
        std::normal_distribution<double> normal(0.0, 1.0);
        while (static_cast<int>(points.size()) < count) {
          Vector v(n);
          for (Index i = 0; i < n; ++i) v[i] = normal(rng);
          const double norm = v.norm();
          if (norm < 1e-12) continue;
          v /= norm;
          if (box.contains(v)) points.push_back(std::move(v));
        }
      } else {
        for (int j = 0; j < count; ++j) {
          Vector v(n);
          for (Index i = 0; i < n; ++i) {
            std::uniform_real_distribution<double> coord(box.lower[i], box.upper[i]);
            v[i] = coord(rng);
          }
          points.push_back(std::move(v));
        }
      }
      break;
    }
  }
  return points;
}

ExperimentPlan build_plan(const AffineSystem& system, const PlanOptions& options) {
  ExperimentPlan plan;
  if (options.sampler == AnchorSampler::user) {
    if (options.user_anchors.empty()) throw InsufficientData("no user-supplied anchors");
    plan.anchors = options.user_anchors;
  } else {
    if (options.num_anchors < 1) throw InvalidArgument("a plan needs at least one anchor");
    plan.anchors = sample_states(system, options.num_anchors, options.sampler,
                                 derive_seed(options.seed, {0x616e63ULL}));
  }

  std::vector<Vector> inputs = options.inputs;
  if (inputs.empty()) {
    const int m = static_cast<int>(system.input_dim());
    const int N = options.num_perturbations > 0 ? options.num_perturbations : m;
    inputs = design_inputs(m, N, options.input_scale);
  }
  plan.input_sets.assign(plan.anchors.size(), inputs);
  plan.sampling_time = options.sampling_time;
  plan.integrator_step = options.integrator_step;
  plan.t0 = options.t0;
  plan.noise_amplitude = options.noise_amplitude;
  plan.seed = options.seed;
  plan.derivative_mode = options.derivative_mode;
  plan.validate(system);
  return plan;
}

namespace {

std::vector<ExperimentRecord> run_anchor(const AffineSystem& system, const ExperimentPlan& plan,
                                         std::size_t j) {
  const auto& inputs = plan.input_sets[j];
  std::vector<ExperimentRecord> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const int aj = static_cast<int>(j);
    const int ii = static_cast<int>(i);
    try {
      ExperimentRecord r =
          run_experiment(system, plan.anchors[j], inputs[i], plan.sampling_time,
                         plan.integrator_step, plan.noise_amplitude,
                         experiment_seed(plan.seed, aj, ii), plan.t0);
      r.anchor_index = aj;
      r.input_index = ii;
      if (plan.derivative_mode == DerivativeMode::exact) {
        const Vector drift = system.drift(r.x_t0, plan.t0);
        Vector control = Vector::Zero(system.state_dim());
        for (Index k = 0; k < system.input_dim(); ++k) {
          if (r.u0[k] != 0.0) control += system.control_field(k, r.x_t0) * r.u0[k];
        }
        r.derivative_estimate = drift + control;
        r.control_component = std::move(control);
      }
      out.push_back(std::move(r));
    } catch (const Error& e) {
      throw StageError("experiment", aj, ii, e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<ExperimentRecord> run_plan(const AffineSystem& system, const ExperimentPlan& plan,
                                       unsigned threads) {
  plan.validate(system);
  const std::size_t anchors = plan.anchors.size();
  std::vector<std::vector<ExperimentRecord>> per_anchor(anchors);

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, unsigned(anchors)));
  if (workers == 1) {
    for (std::size_t j = 0; j < anchors; ++j) per_anchor[j] = run_anchor(system, plan, j);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t j = w; j < anchors; j += workers) {
              per_anchor[j] = run_anchor(system, plan, j);
            }
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<ExperimentRecord> records;
  records.reserve(plan.experiment_count());
  for (auto& batch : per_anchor) {
    for (auto& r : batch) records.push_back(std::move(r));
  }
  return records;
}

std::vector<DifferenceSample> collect_differences(const ExperimentPlan& plan,
                                                  const std::vector<ExperimentRecord>& records) {
  std::vector<DifferenceSample> samples;
  std::size_t offset = 0;
  for (std::size_t j = 0; j < plan.input_sets.size(); ++j) {
    const std::size_t count = plan.input_sets[j].size();
    if (offset + count > records.size()) {
      throw InsufficientData("missing experiment records for anchor " + std::to_string(j));
    }
    std::vector<ExperimentRecord> batch(records.begin() + std::ptrdiff_t(offset),
                                        records.begin() + std::ptrdiff_t(offset + count));
    auto diffs = form_differences(batch, plan.reference_index);
    samples.insert(samples.end(), std::make_move_iterator(diffs.begin()),
                   std::make_move_iterator(diffs.end()));
    offset += count;
  }
  return samples;
}

}  // namespace ctrlid
