#include "ctrlid/errors.hpp"
#include "ctrlid/recovery.hpp"
#include "ctrlid/scenarios.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace ctrlid;

namespace {

Matrix demo_A() { return (Matrix(2, 2) << 1, 4, 5, -1).finished(); }
Matrix demo_B() { return (Matrix(2, 2) << 2, 1, 0.6, 1).finished(); }

// Monomial L=2 index of each coordinate x1, x2, x3.
constexpr int kX[3] = {1, 2, 3};

// True Bloch gain coefficients: g11 = e x3, g22 = -e x3, g31 = -e x1, g32 = e x2.
Matrix bloch_entry_truth(double e) {
  Matrix T = Matrix::Zero(6, 10);
  T(0, kX[2]) = e;
  T(3, kX[2]) = -e;
  T(4, kX[0]) = -e;
  T(5, kX[1]) = e;
  return T;
}

}  // namespace

TEST(RecoverConstantB, ClosedFormOracleAtDefaultSamplingTime) {
  const auto sc = load_scenario("linear_2x2");
  const Matrix B_hat = recover_constant_b(sc.system, sc.build());
  const Matrix ref = oracle::linear_gain_estimate(
      demo_A(), demo_B(), Eigen::Vector2d(0, -0.25),
      {Eigen::Vector2d(1, 2), Eigen::Vector2d(2, 4), Eigen::Vector2d(3, 8)}, 1e-3);
  EXPECT_LE((B_hat - ref).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((B_hat - demo_B()).cwiseAbs().maxCoeff(), 5e-3);
}

TEST(RecoverConstantB, ExactDerivativesGiveTrueGain) {
  const auto sc = load_scenario("linear_2x2", {{"oracle_derivatives", "true"}});
  const Matrix B_hat = recover_constant_b(sc.system, sc.build());
  EXPECT_LE((B_hat - demo_B()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RecoverConstantB, ErrorHalvesWithSamplingTime) {
  auto error = [](double ts) {
    const auto sc = load_scenario("linear_2x2", {{"ts", ctrlid::format_double(ts)}});
    return (recover_constant_b(sc.system, sc.build()) - demo_B()).cwiseAbs().maxCoeff();
  };
  const double ratio = error(1e-3) / error(5e-4);
  EXPECT_GE(ratio, 1.5);
  EXPECT_LE(ratio, 2.5);
}

TEST(RecoverConstantB, DegenerateDesignNamesDirection) {
  const auto sys = make_linear_system(demo_A(), demo_B());
  PlanOptions opt;
  opt.sampler = AnchorSampler::user;
  opt.user_anchors = {Eigen::Vector2d(0, 0)};
  opt.inputs = {Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0), Eigen::Vector2d(2, 0)};
  try {
    recover_constant_b(sys, build_plan(sys, opt));
    FAIL() << "expected DegenerateDesign";
  } catch (const DegenerateDesign& e) {
    EXPECT_NE(std::string(e.what()).find("(0, 1)"), std::string::npos) << e.what();
  }
}

TEST(RecoverControlField, ConstantBasisMatchesConstantPath) {
  const auto sc = load_scenario("linear_2x2");
  const auto plan = sc.build();
  const auto field = recover_control_field(sc.system, plan, sc.basis);
  const Matrix B_hat = recover_constant_b(sc.system, plan);
  EXPECT_LE((field.evaluate(Eigen::Vector2d(0.3, 0.1)) - B_hat).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RecoverControlField, AllZeroInputsAreDegenerate) {
  const auto sys = make_bloch_system(0.6, 1.4);
  PlanOptions opt;
  opt.num_anchors = 3;
  opt.inputs = {Vector::Zero(2), Vector::Zero(2)};
  EXPECT_THROW(recover_control_field(sys, build_plan(sys, opt),
                                     BasisSpec{BasisFamily::monomial, 1, Box::cube(3, -1, 1), {}}),
               DegenerateDesign);
}

TEST(RecoverControlField, BlochExactRepresentability) {
  const auto sc = load_scenario("bloch", {{"oracle_derivatives", "true"}});
  const auto field = recover_control_field(sc.system, sc.build(), sc.basis);
  const Matrix T = bloch_entry_truth(0.6);
  for (Index j = 0; j < 3; ++j) {
    for (Index s = 0; s < 2; ++s) {
      const Vector c = field.entry_coefficients(j, s);
      EXPECT_LE((c - T.row(j * 2 + s).transpose()).cwiseAbs().maxCoeff(), 1e-8)
          << "entry " << j << s;
    }
  }
}

TEST(RecoverControlField, BlochForwardDifferenceValidation) {
  const auto sc = load_scenario("bloch");
  const auto field = recover_control_field(sc.system, sc.build(), sc.basis);
  const auto report = validate_field(field, sc.system, 1000, 77);
  EXPECT_EQ(report.sample_count(), 1000);
  EXPECT_LE(report.max_abs(0, 0), 1e-2);
  const auto other = validate_field(field, sc.system, 1000, 78);
  for (Index j = 0; j < 3; ++j)
    for (Index s = 0; s < 2; ++s)
      EXPECT_NEAR(other.rmse(j, s), report.rmse(j, s), 0.2 * report.rmse(j, s));
}

TEST(RecoverControlField, DriftSwapGivesIdenticalCoefficients) {
  const auto sc = load_scenario("bloch", {{"oracle_derivatives", "true"}});
  const auto plan = sc.build();
  const auto other = sc.system.with_drift([](const Vector& x, double) {
    return Vector(Eigen::Vector3d(x[1] * x[1], -x[0] * x[2], x[0]));
  });
  const auto a = recover_control_field(sc.system, plan, sc.basis);
  const auto b = recover_control_field(other, plan, sc.basis);
  EXPECT_EQ(a.stacked_coefficients(), b.stacked_coefficients());
}

TEST(RecoverControlField, ForwardDifferenceDriftSensitivityShrinksWithTs) {
  std::vector<double> gaps;
  for (const char* ts : {"1e-3", "1e-4"}) {
    const auto sc = load_scenario("bloch", {{"ts", ts}});
    const auto plan = sc.build();
    const auto other = sc.system.with_drift([](const Vector& x, double) {
      return Vector(Eigen::Vector3d(x[1] * x[1], -x[0] * x[2], x[0]));
    });
    const auto a = recover_control_field(sc.system, plan, sc.basis);
    const auto b = recover_control_field(other, plan, sc.basis);
    gaps.push_back((a.stacked_coefficients() - b.stacked_coefficients()).norm());
  }
  EXPECT_GT(gaps[0], 0.0);
  EXPECT_NEAR(gaps[0] / gaps[1], 10.0, 3.0);
}

TEST(RecoverControlField, PrcCoefficientsMatchProjection) {
  const auto sc = load_scenario("prc");
  const auto field = recover_control_field(sc.system, sc.build(), sc.basis);
  const auto proj = oracle::fourier_projection(oracle::prc, 6);
  const Vector c = field.entry_coefficients(0, 0);
  const Vector ref = Eigen::Map<const Vector>(proj.data(), Index(proj.size()));
  EXPECT_LE((c - ref).norm() / ref.norm(), 5e-2);
}

TEST(ValidateField, TruthInjectionHasZeroError) {
  const auto sc = load_scenario("bloch", {{"oracle_derivatives", "true"}});
  const Matrix T = bloch_entry_truth(0.6);
  std::vector<Vector> outputs(3, Vector::Zero(20));
  for (Index j = 0; j < 3; ++j)
    for (Index s = 0; s < 2; ++s) outputs[std::size_t(j)].segment(s * 10, 10) = T.row(j * 2 + s).transpose();
  const RecoveredControlField field(sc.basis, 3, 2, outputs, {});
  const auto report = validate_field(field, sc.system, 200, 1);
  EXPECT_LE(report.max_abs.maxCoeff(), 1e-15);
  EXPECT_EQ(report.out_of_domain, 0);
}

TEST(ValidateField, UnderOrderedPrcRmseIsPrcSpread) {
  const auto sc = load_scenario("prc", {{"order", "0"}});
  const auto field = recover_control_field(sc.system, sc.build(), sc.basis);
  std::vector<Vector> grid;
  for (int i = 0; i < 10000; ++i) grid.push_back(Vector::Constant(1, 2 * std::numbers::pi * i / 10000));
  const auto report = validate_field(field, sc.system, grid);
  const double two_pi = 2 * std::numbers::pi;
  const double mean = oracle::simpson(oracle::prc, 0, two_pi) / two_pi;
  const double spread = std::sqrt(
      oracle::simpson([&](double t) { return std::pow(oracle::prc(t) - mean, 2); }, 0, two_pi) /
      two_pi);
  EXPECT_NEAR(report.rmse(0, 0), spread, 0.1 * spread);
}

TEST(ValidateField, DimensionMismatch) {
  const auto lin = load_scenario("linear_2x2");
  const auto field = recover_control_field(lin.system, lin.build(), lin.basis);
  EXPECT_THROW(validate_field(field, make_bloch_system(0.6, 1.4), 10, 1), InvalidArgument);
}

TEST(RecoverDrift, LinearSystemFromRecoveredGain) {
  const auto sc = load_scenario("linear_2x2");
  const auto plan = sc.build();
  const auto control = recover_control_field(sc.system, plan, sc.basis);
  const auto drift = recover_drift_field(sc.system, plan, control, sc.drift_basis,
                                         DriftPhaseOptions{200, false});
  const Matrix A_hat = drift.coefficients().rightCols(2);
  EXPECT_LE((A_hat - demo_A()).cwiseAbs().maxCoeff(), 5e-3);
  EXPECT_LE(drift.coefficients().col(0).cwiseAbs().maxCoeff(), 5e-3);
}

TEST(RecoverDrift, ZeroDriftGivesNearZeroCoefficients) {
  const auto sys = make_linear_system(Matrix::Zero(2, 2), demo_B());
  const auto sc = load_scenario("linear_2x2");
  const auto plan = build_plan(sys, sc.plan);
  const auto control = recover_control_field(sys, plan, sc.basis);
  const auto drift = recover_drift_field(sys, plan, control, sc.drift_basis);
  EXPECT_LE(drift.coefficients().cwiseAbs().maxCoeff(), 1e-9);
}

TEST(RecoverDrift, BlochOmegaWithExactGain) {
  const auto sc = load_scenario("bloch", {{"oracle_derivatives", "true"}});
  const auto plan = sc.build();
  const auto control = recover_control_field(sc.system, plan, sc.basis);
  const BasisSpec lin{BasisFamily::monomial, 1, sc.system.state_domain(), {}};
  const auto drift = recover_drift_field(sc.system, plan, control, lin, DriftPhaseOptions{20, true});
  Matrix expected = Matrix::Zero(3, 4);
  expected(0, 2) = -1.4;
  expected(1, 1) = 1.4;
  EXPECT_LE((drift.coefficients() - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(NoiseStudy, ZeroNoiseGivesZeroError) {
  const auto sc = load_scenario("prc_noise", {{"noise", "0"}, {"trials", "3"}, {"study_n", "5,25"}});
  const auto study = noise_convergence_study(sc.system, sc.build(), sc.basis, {5, 25}, 3, 1);
  EXPECT_EQ(study.errors.maxCoeff(), 0.0);
}

TEST(NoiseStudy, MedianShrinksAndIsStable) {
  const auto sc = load_scenario("prc_noise");
  const auto plan = sc.build();
  const auto base = noise_convergence_study(sc.system, plan, sc.basis, {5, 100}, 20, 5);
  EXPECT_LE(base.rows[1].median_error, base.rows[0].median_error / 3);
  const auto doubled = noise_convergence_study(sc.system, plan, sc.basis, {5, 100}, 40, 5);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_GE(doubled.rows[i].median_error, base.rows[i].q25);
    EXPECT_LE(doubled.rows[i].median_error, base.rows[i].q75);
  }
}

TEST(NoiseStudy, Quantile) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5}, 0.25), 2.0);
}
