#include "ctrlid/errors.hpp"
#include "ctrlid/experiment.hpp"
#include "ctrlid/scenarios.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace ctrlid;

namespace {

Matrix demo_A() { return (Matrix(2, 2) << 1, 4, 5, -1).finished(); }
Matrix demo_B() { return (Matrix(2, 2) << 2, 1, 0.6, 1).finished(); }
const Vector kAnchor = Eigen::Vector2d(0, -0.25);

std::vector<ExperimentRecord> demo_records(double ts) {
  const auto sys = make_linear_system(demo_A(), demo_B());
  std::vector<ExperimentRecord> records;
  int i = 0;
  for (const Vector& u : {Vector(Eigen::Vector2d(1, 2)), Vector(Eigen::Vector2d(2, 4)),
                          Vector(Eigen::Vector2d(3, 8))}) {
    auto r = run_experiment(sys, kAnchor, u, ts, 1e-5, 0.0, 0);
    r.input_index = i++;
    records.push_back(r);
  }
  return records;
}

}  // namespace

TEST(RunExperiment, DemoAnchorForwardDifference) {
  const auto r = demo_records(1e-3).front();
  EXPECT_EQ(r.x_t0, kAnchor);
  EXPECT_NEAR(r.derivative_estimate[0], 3.0, 0.05);
  EXPECT_NEAR(r.derivative_estimate[1], 2.85, 0.05);
  const Vector closed = oracle::linear_forward_difference(demo_A(), demo_B(), kAnchor,
                                                          Eigen::Vector2d(1, 2), 1e-3);
  EXPECT_LE((r.derivative_estimate - closed).norm(), 1e-8);
}

TEST(RunExperiment, BitwiseRepeatable) {
  const auto sys = make_bloch_system(0.6, 1.4);
  const Vector a = Eigen::Vector3d(0, 0.6, 0.8);
  const auto r1 = run_experiment(sys, a, Eigen::Vector2d(1, 2), 1e-3, 1e-5, 0.5, 42);
  const auto r2 = run_experiment(sys, a, Eigen::Vector2d(1, 2), 1e-3, 1e-5, 0.5, 42);
  EXPECT_EQ(r1.x_t0_plus_ts, r2.x_t0_plus_ts);
  EXPECT_EQ(r1.derivative_estimate, r2.derivative_estimate);
}

TEST(RunExperiment, ConstantDerivativeIsExact) {
  const AffineSystem sys(1, [](const Vector&, double) { return Vector::Zero(1); },
                         {[](const Vector&) { return Vector::Ones(1); }}, Box::cube(1, -1, 1));
  const auto r = run_experiment(sys, Vector::Zero(1), Vector::Constant(1, 5.0), 1e-3, 1e-5, 0.0, 0);
  EXPECT_NEAR(r.x_t0_plus_ts[0], 5e-3, 1e-12);
}

TEST(RunExperiment, AnchorOutsideDomain) {
  const auto sys = make_linear_system(demo_A(), demo_B());
  EXPECT_THROW(run_experiment(sys, Eigen::Vector2d(3, 0), Eigen::Vector2d(1, 1), 1e-3, 1e-5, 0, 0),
               DomainError);
}

TEST(EstimateDerivative, ZeroDynamicsAndBadSamplingTime) {
  const AffineSystem sys(2, [](const Vector&, double) { return Vector::Zero(2); },
                         {[](const Vector&) { return Vector::Zero(2); }}, Box::cube(2, -1, 1));
  const auto r = run_experiment(sys, Eigen::Vector2d(0.1, 0.2), Vector::Ones(1), 1e-3, 1e-4, 0, 0);
  EXPECT_EQ(estimate_derivative(r, 1e-3), Vector::Zero(2));
  EXPECT_THROW(estimate_derivative(r, 0.0), InvalidArgument);
  EXPECT_THROW(estimate_derivative(r, -1.0), InvalidArgument);
}

TEST(EstimateDerivative, QuadraticTrajectoryBiasIsLinearInTs) {
  // xdot = 2 t through the clock argument: x(t) = t^2, true derivative at 0 is 0.
  const AffineSystem sys(1, [](const Vector&, double t) { return Vector::Constant(1, 2 * t); },
                         {[](const Vector&) { return Vector::Zero(1); }}, Box::cube(1, -1, 1));
  auto bias = [&](double ts) {
    const auto r = run_experiment(sys, Vector::Zero(1), Vector::Zero(1), ts, ts / 100, 0, 0);
    return r.derivative_estimate[0];
  };
  EXPECT_NEAR(bias(1e-2), 1e-2, 1e-12);
  const double ratio = bias(1e-2) / bias(5e-3);
  EXPECT_NEAR(ratio, 2.0, 0.1);
}

TEST(FormDifferences, DemoInputs) {
  const auto diffs = form_differences(demo_records(1e-3), 0);
  ASSERT_EQ(diffs.size(), 2u);
  EXPECT_EQ(diffs[0].delta_u, Vector(Eigen::Vector2d(-1, -2)));
  EXPECT_EQ(diffs[1].delta_u, Vector(Eigen::Vector2d(-2, -6)));
  for (const auto& d : diffs) EXPECT_EQ(d.anchor_state, kAnchor);
}

TEST(FormDifferences, MatchesClosedFormTargets) {
  for (double ts : {1e-3, 1e-4}) {
    const auto diffs = form_differences(demo_records(ts), 0);
    const Vector ref = oracle::linear_forward_difference(demo_A(), demo_B(), kAnchor,
                                                         Eigen::Vector2d(1, 2), ts);
    const Vector d1 = ref - oracle::linear_forward_difference(demo_A(), demo_B(), kAnchor,
                                                              Eigen::Vector2d(2, 4), ts);
    EXPECT_LE((diffs[0].delta_xdot - d1).norm(), 1e-6) << "ts=" << ts;
  }
}

TEST(FormDifferences, IdenticalInputsGiveZero) {
  auto records = demo_records(1e-3);
  records[1] = records[0];
  records[1].input_index = 1;
  const auto diffs = form_differences(records, 0);
  EXPECT_EQ(diffs[0].delta_u, Vector::Zero(2));
  EXPECT_EQ(diffs[0].delta_xdot, Vector::Zero(2));
}

TEST(FormDifferences, CountIsRecordsMinusOne) {
  std::vector<ExperimentRecord> records = demo_records(1e-3);
  for (int extra = 0; extra < 4; ++extra) {
    EXPECT_EQ(form_differences(records, 0).size(), records.size() - 1);
    records.push_back(records.back());
  }
}

TEST(FormDifferences, Errors) {
  auto records = demo_records(1e-3);
  EXPECT_THROW(form_differences({records[0]}, 0), InsufficientData);
  records[2].anchor_index = 3;
  EXPECT_THROW(form_differences(records, 0), ProtocolViolation);
}

TEST(DesignInputs, IdentityAndDeterminant) {
  const auto two = design_inputs(2, 2, 1.0);
  ASSERT_EQ(two.size(), 3u);
  Matrix dU(2, 2);
  for (int i = 0; i < 2; ++i) dU.row(i) = (two[0] - two[std::size_t(i + 1)]).transpose();
  EXPECT_EQ(dU, Matrix::Identity(2, 2));

  const auto three = design_inputs(3, 3, 2.0);
  Matrix dU3(3, 3);
  for (int i = 0; i < 3; ++i) dU3.row(i) = (three[0] - three[std::size_t(i + 1)]).transpose();
  EXPECT_NEAR(dU3.determinant(), 8.0, 1e-12);
}

TEST(DesignInputs, OverdeterminedRecoversGain) {
  const auto inputs = design_inputs(2, 4, 1.0);
  Matrix dU(4, 2);
  for (int i = 0; i < 4; ++i) dU.row(i) = (inputs[0] - inputs[std::size_t(i + 1)]).transpose();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 20; ++t) {
    const Vector b = Eigen::Vector2d(normal(rng), normal(rng));
    const Vector rhs = dU * b;
    EXPECT_LE((dU.colPivHouseholderQr().solve(rhs) - b).norm(), 1e-12);
  }
}

TEST(DesignInputs, InfeasibleWhenTooFew) {
  EXPECT_THROW(design_inputs(3, 2, 1.0), InfeasibleDesign);
}

TEST(BuildPlan, ScenarioSizes) {
  const auto bloch = load_scenario("bloch");
  const auto plan = bloch.build();
  EXPECT_EQ(plan.anchors.size(), 20u);
  EXPECT_EQ(plan.experiment_count(), 160u);
  for (const auto& a : plan.anchors) EXPECT_NEAR(a.norm(), 1.0, 1e-12);

  const auto prc = load_scenario("prc");
  const auto prc_plan = prc.build();
  EXPECT_EQ(prc_plan.anchors.size(), 35u);
  EXPECT_EQ(prc_plan.experiment_count(), 105u);
  for (const auto& a : prc_plan.anchors) {
    EXPECT_GE(a[0], 0.0);
    EXPECT_LT(a[0], 2 * std::numbers::pi);
  }
}

TEST(BuildPlan, MinimalPlan) {
  const auto sys = make_linear_system(Matrix::Zero(1, 1), Matrix::Ones(1, 1));
  PlanOptions opt;
  opt.num_anchors = 1;
  opt.num_perturbations = 1;
  const auto plan = build_plan(sys, opt);
  EXPECT_EQ(plan.experiment_count(), 2u);
  const auto records = run_plan(sys, plan);
  EXPECT_EQ(collect_differences(plan, records).size(), 1u);
}

TEST(BuildPlan, InvalidPlansRejected) {
  const auto sys = make_linear_system(demo_A(), demo_B());
  PlanOptions opt;
  opt.sampling_time = 0.0;
  EXPECT_THROW(build_plan(sys, opt), InvalidArgument);
  opt = {};
  opt.sampler = AnchorSampler::user;
  opt.user_anchors = {Eigen::Vector2d(5, 5)};
  EXPECT_THROW(build_plan(sys, opt), DomainError);
}

TEST(RunPlan, NoiselessRerunIsBitwiseAndThreadIndependent) {
  auto sc = load_scenario("bloch");
  const auto plan = sc.build();
  const auto a = run_plan(sc.system, plan, 1);
  const auto b = run_plan(sc.system, plan, 4);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x_t0_plus_ts, b[i].x_t0_plus_ts);
    EXPECT_EQ(a[i].anchor_index, b[i].anchor_index);
    EXPECT_EQ(a[i].input_index, b[i].input_index);
  }
}

TEST(RunPlan, ExactDifferencesEqualGainTimesInput) {
  auto sc = load_scenario("bloch", {{"oracle_derivatives", "true"}});
  const auto plan = sc.build();
  const auto samples = collect_differences(plan, run_plan(sc.system, plan));
  for (const auto& s : samples) {
    const Vector expected = sc.system.control_matrix(s.anchor_state) * s.delta_u;
    EXPECT_LE((s.delta_xdot - expected).norm(), 1e-15);
  }
}

TEST(RunPlan, DriftSwapBitwiseInExactModeLinearInTsOtherwise) {
  const auto sys = make_linear_system(demo_A(), demo_B());
  const auto other = sys.with_drift([](const Vector& x, double) {
    return Vector(Eigen::Vector2d(x[1] * x[1] - 3 * x[0], std::sin(4 * x[0]) + x[1]));
  });
  PlanOptions opt;
  opt.num_anchors = 6;
  opt.num_perturbations = 4;
  opt.seed = 9;
  opt.derivative_mode = DerivativeMode::exact;
  {
    const auto plan = build_plan(sys, opt);
    const auto a = collect_differences(plan, run_plan(sys, plan));
    const auto b = collect_differences(plan, run_plan(other, plan));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].delta_xdot, b[i].delta_xdot);
  }
  opt.derivative_mode = DerivativeMode::forward_difference;
  std::vector<double> gaps;
  for (double ts : {1e-3, 1e-4}) {
    opt.sampling_time = ts;
    opt.integrator_step = ts / 100;
    const auto plan = build_plan(sys, opt);
    const auto a = collect_differences(plan, run_plan(sys, plan));
    const auto b = collect_differences(plan, run_plan(other, plan));
    double gap = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) gap = std::max(gap, (a[i].delta_xdot - b[i].delta_xdot).norm());
    gaps.push_back(gap);
  }
  EXPECT_GT(gaps[0], 0.0);
  EXPECT_NEAR(gaps[0] / gaps[1], 10.0, 2.0);
}

TEST(RunPlan, FailuresNameTheExperiment) {
  const AffineSystem blowup(
      1, [](const Vector& x, double) { return Vector(x.array().square() * 1e8); },
      {[](const Vector&) { return Vector::Ones(1); }}, Box::cube(1, -10, 10));
  PlanOptions opt;
  opt.sampler = AnchorSampler::user;
  opt.user_anchors = {Vector::Constant(1, 5.0)};
  opt.num_perturbations = 1;
  opt.sampling_time = 1.0;
  opt.integrator_step = 0.1;
  const auto plan = build_plan(blowup, opt);
  try {
    run_plan(blowup, plan);
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "experiment");
    EXPECT_EQ(e.anchor_index(), 0);
    EXPECT_TRUE(e.input_index().has_value());
  }
}

TEST(SampleStates, LatticeIsEvenlySpaced) {
  const auto sys = make_phase_oscillator(example_prc, [](double) { return 0.0; }, 0.0);
  const auto pts = sample_states(sys, 35, AnchorSampler::lattice, 4);
  ASSERT_EQ(pts.size(), 35u);
  const double w = 2 * std::numbers::pi / 35;
  for (std::size_t i = 1; i < pts.size(); ++i) EXPECT_NEAR(pts[i][0] - pts[i - 1][0], w, 1e-12);
  EXPECT_LT(pts[0][0], w);
}
