#include "mmflow/functionals.hpp"
#include "mmflow/mm.hpp"
#include "mmflow/spaces.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace mmflow;

namespace {

Point P(double x) { return Point::Constant(1, x); }

EnergySystem quad_system(double a = 1.0, double b = 0.0) {
  return EnergySystem(std::make_shared<EuclideanSpace>(1), QuadraticFunctional::scalar(a, b));
}

DiscreteTrajectory run(const EnergySystem& sys, double tau, std::size_t N, const Point& u0, double eta = 0.0) {
  SchemeParams p;
  p.tau = tau;
  p.N = N;
  p.eta = eta;
  return run_minimizing_movement(sys, p, u0);
}

}  // namespace

TEST(TimeHelpers, Examples) {
  EXPECT_NEAR(t_ceil(0.5, 0.2), 0.6, 1e-15);
  EXPECT_NEAR(t_ceil(0.6, 0.2), 0.6, 1e-15);
  EXPECT_NEAR(t_ceil(0.0, 0.2), 0.0, 1e-15);
  EXPECT_EQ(gamma_of(0.0, -1.0), 3.0);
  EXPECT_EQ(gamma_of(0.5, 1.0), -2.0);
  EXPECT_NEAR(t_tau_beta(1.0, 0.1, 0.25), 1.1, 1e-12);
}

TEST(Scheme, QuadraticClosedFormRecursion) {
  const auto tr = run(quad_system(), 0.1, 30, P(1.5));
  ASSERT_EQ(tr.points.size(), 31u);
  for (std::size_t n = 0; n <= 30; ++n) EXPECT_NEAR(tr.points[n][0], 1.5 / std::pow(1.1, static_cast<double>(n)), 1e-14);
  EXPECT_EQ(tr.per_step.size(), 30u);
  EXPECT_NEAR(tr.horizon(), 3.0, 1e-12);
}

TEST(Scheme, ZeroStepsReturnsInitialDatum) {
  const auto tr = run(quad_system(), 0.1, 0, P(2.0));
  ASSERT_EQ(tr.points.size(), 1u);
  EXPECT_EQ(tr.points[0], P(2.0));
  EXPECT_EQ(tr.eps, 0.0);
}

TEST(Scheme, EnergiesNonincreasing) {
  std::vector<std::pair<EnergySystem, Point>> cases = {
      {quad_system(2.0, 1.0), P(-3.0)},
      {EnergySystem(std::make_shared<EuclideanSpace>(1), std::make_shared<AbsNormFunctional>(1.0)), P(0.77)},
      {EnergySystem(std::make_shared<EuclideanSpace>(1), std::make_shared<NegSqrtFunctional>()), P(0.0)},
      {EnergySystem(std::make_shared<QuantileSpace>(64), std::make_shared<QuantileEntropy>()), gaussian_quantile(0.0, 1.0, 64)},
      {EnergySystem(std::make_shared<QuantileSpace>(64), fokker_planck_functional(1.0)), gaussian_quantile(2.0, 0.3, 64)},
  };
  for (const auto& [sys, u0] : cases) {
    const auto tr = run(sys, 0.05, 20, u0);
    for (std::size_t n = 1; n < tr.points.size(); ++n)
      EXPECT_LE(sys.phi().value(tr.points[n]), sys.phi().value(tr.points[n - 1]) + 1e-13) << sys.phi().name();
  }
}

TEST(Scheme, StepGuardAndAbort) {
  ScalarFunctional concave("-x^2/2", [](double x) { return -0.5 * x * x; }, [](double x) { return -x; },
                           [](double) { return -1.0; }, -1.0);
  EnergySystem sys(std::make_shared<EuclideanSpace>(1), std::make_shared<ScalarFunctional>(concave));
  EXPECT_THROW(run(sys, 0.1, 3, P(1.0)), Error);  // 4 * 3 * 0.1 > 1

  // gradient inconsistent with the value: no step can be certified
  auto broken = std::make_shared<ScalarFunctional>("broken", [](double x) { return x * x; },
                                                   [](double x) { return 2.0 * x + 5.0; }, [](double) { return 2.0; }, 0.0);
  EnergySystem bad(std::make_shared<EuclideanSpace>(1), broken);
  try {
    run(bad, 0.1, 5, P(1.0));
    FAIL() << "expected SchemeAbort";
  } catch (const SchemeAbort& e) {
    EXPECT_EQ(e.step(), 1u);
  }
  EXPECT_THROW(run(quad_system(), 0.1, 3, Point::Zero(2)), Error);
}

TEST(Interpolant, Examples) {
  const auto tr = run(quad_system(), 0.1, 5, P(1.0));
  EXPECT_EQ(interpolant_eval(tr, 0.0), tr.points[0]);
  EXPECT_EQ(interpolant_eval(tr, 0.1), tr.points[1]);
  EXPECT_EQ(interpolant_eval(tr, 0.15), tr.points[2]);
  EXPECT_EQ(interpolant_eval(tr, 1e-9), tr.points[1]);
  EXPECT_EQ(interpolant_eval(tr, 0.5), tr.points[5]);
  EXPECT_THROW(interpolant_eval(tr, 0.55), Error);
  for (int n = 1; n <= 5; ++n) {
    // constant on ((n-1) tau, n tau], jumps only at grid points
    EXPECT_EQ(interpolant_eval(tr, 0.1 * n), interpolant_eval(tr, 0.1 * n - 1e-6));
    EXPECT_EQ(interpolant_eval(tr, 0.1 * (n - 1) + 1e-6), tr.points[n]);
  }
}

TEST(DiscreteStability, QuadraticExamples) {
  const double tau = 0.1;
  const auto tr = run(quad_system(), tau, 20, P(1.0));
  const auto rep = discrete_stability_report(tr, 1.0);
  EXPECT_TRUE(rep.pass());
  for (const auto& s : rep.samples()) {
    if (s.label.find("slope-vs-step") != std::string::npos) EXPECT_NEAR(s.lhs, s.rhs, 1e-13);  // equality for eta = 0
    if (s.label.find("energy-drop") != std::string::npos) {
      const int n = std::stoi(s.label.substr(2));
      const double Un = std::pow(1.1, -n), Um = std::pow(1.1, -(n - 1));
      EXPECT_NEAR(s.lhs, 1.05 * (Um - Un) * (Um - Un) / tau, 1e-13);
      EXPECT_NEAR(s.rhs, 0.5 * (Um * Um - Un * Un), 1e-13);
    }
  }
  const auto still = run(quad_system(), tau, 5, P(0.0));
  const auto zero = discrete_stability_report(still, 1.0);
  EXPECT_TRUE(zero.pass());
  for (const auto& s : zero.samples()) {
    EXPECT_EQ(s.lhs, 0.0);
    EXPECT_EQ(s.rhs, 0.0);
  }
  EXPECT_THROW(discrete_stability_report(tr, 2.0), Error);
}

TEST(DiscreteStabilityProperty, SlopeRecursionOnRandomRuns) {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    const double a = 0.2 + std::abs(n(rng)), b = n(rng), eta = trial % 2 ? 0.0 : 0.3;
    const auto sys = quad_system(a, b);
    const auto tr = run(sys, 0.05 + 0.1 * std::abs(n(rng)), 15, P(3.0 * n(rng)), eta);
    const auto rep = discrete_stability_report(tr, a);
    EXPECT_TRUE(rep.pass());
    EXPECT_TRUE(telescoped_descent_check(tr).pass());
    if (eta == 0.0)
      for (std::size_t k = 1; k < tr.points.size(); ++k)
        EXPECT_LE(metric_slope(sys.phi(), sys.X(), tr.points[k]), metric_slope(sys.phi(), sys.X(), tr.points[k - 1]) + 1e-14);
  }
  QuantileSpace Q(64);
  EnergySystem heat(std::make_shared<QuantileSpace>(64), std::make_shared<QuantileEntropy>());
  const auto tr = run(heat, 0.02, 10, gaussian_quantile(0.0, 0.5, 64));
  EXPECT_TRUE(discrete_stability_report(tr, 0.0).pass());
  EXPECT_TRUE(telescoped_descent_check(tr).pass());
}

TEST(ContinuousStability, QuadraticLambdaZeroClosedForm) {
  const double tau = 0.1, u0 = 1.0;
  const auto sys = quad_system();
  const auto tr = run(sys, tau, 10, P(u0));
  ContinuousStabilityOptions opt;
  opt.t_samples = {0.3, 0.55, 1.0};
  opt.s_samples = {0.1, 0.4};
  const auto rep = continuous_stability_report(sys, tr, 0.0, opt);
  EXPECT_TRUE(rep.pass());
  for (const auto& s : rep.samples()) {
    if (s.label.find("distance-from-start") == std::string::npos) continue;
    const double t = std::stod(s.label.substr(2));
    const double tt = t_ceil(t, tau);
    const double Un = u0 / std::pow(1.0 + tau, std::round(tt / tau));
    EXPECT_NEAR(s.lhs, 0.5 * (Un - u0) * (Un - u0), 1e-14);
    EXPECT_NEAR(s.rhs, tt * (0.5 * u0 * u0 - u0 * u0 / (2.0 * (1.0 + tt))), 1e-12);
  }
  const auto still = run(sys, tau, 10, P(0.0));
  const auto z = continuous_stability_report(sys, still, 0.0, opt);
  EXPECT_TRUE(z.pass());
  EXPECT_EQ(z.max_residual(), 0.0);
  EXPECT_FALSE(continuous_stability_report(sys, tr, 0.5, opt).applicable());
}

TEST(ContinuousStability, NegativeLambdaAndRelaxation) {
  ScalarFunctional dw("x^4/4 - x^2/2", [](double x) { return 0.25 * x * x * x * x - 0.5 * x * x; },
                      [](double x) { return x * x * x - x; }, [](double x) { return 3.0 * x * x - 1.0; }, -1.0);
  EnergySystem sys(std::make_shared<EuclideanSpace>(1), std::make_shared<ScalarFunctional>(dw));
  SchemeParams p;
  p.tau = 0.02;
  p.N = 50;
  p.eta = 0.1;
  const auto tr = run_minimizing_movement(sys, p, P(1.8));
  ContinuousStabilityOptions opt;
  opt.t_samples = {0.2, 0.5, 1.0};
  opt.s_samples = {0.02, 0.3};
  EXPECT_TRUE(continuous_stability_report(sys, tr, -1.0, opt).pass());
  EXPECT_TRUE(discrete_stability_report(tr, -1.0).pass());
}

TEST(Serialization, RoundTrip) {
  EnergySystem heat(std::make_shared<QuantileSpace>(8), std::make_shared<QuantileEntropy>());
  const auto tr = run(heat, 0.1, 3, gaussian_quantile(0.0, 1.0, 8));
  std::stringstream ss;
  write_discrete_trajectory(ss, tr);
  const auto back = read_discrete_trajectory(ss);
  EXPECT_EQ(back.space_kind, "quantile");
  EXPECT_EQ(back.dimension, 8u);
  EXPECT_EQ(back.tau, tr.tau);
  EXPECT_EQ(back.eps, tr.eps);
  ASSERT_EQ(back.points.size(), tr.points.size());
  for (std::size_t n = 0; n < tr.points.size(); ++n) {
    EXPECT_EQ(back.points[n], tr.points[n]);
    EXPECT_EQ(back.times[n], tr.tau * static_cast<double>(n));
  }
  std::stringstream bad("# space=euclidean dim=1\n0\t0\t1\n");
  EXPECT_THROW(read_discrete_trajectory(bad), Error);
}
