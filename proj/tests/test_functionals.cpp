#include "mmflow/functionals.hpp"
#include "mmflow/geometry.hpp"
#include "mmflow/resolvent.hpp"
#include "mmflow/spaces.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/minima.hpp>

#include <numbers>
#include <random>

using namespace mmflow;

namespace {

const EuclideanSpace R1(1);

Point P(double x) { return Point::Constant(1, x); }

/// Golden-section / Brent oracle for min_y (y - x)^2/(2 tau) + g(y) on [lo, hi].
double oracle_min(const std::function<double(double)>& g, double x, double tau, double lo, double hi) {
  auto obj = [&](double y) { return (y - x) * (y - x) / (2.0 * tau) + g(y); };
  return boost::math::tools::brent_find_minima(obj, lo, hi, 60).second;
}

/// -(1/M) sum log(M dq) for the Gaussian grid, evaluated through the
/// continuum integral on [h, 1-h] with h = 1/(2M) plus its tail terms.
double truncated_gaussian_entropy(std::size_t M) {
  const double h = 0.5 / static_cast<double>(M);
  boost::math::normal N;
  const double z = boost::math::quantile(N, 1.0 - h);
  const double tail_second_moment = 2.0 * (z * boost::math::pdf(N, z) + h);
  return -(1.0 - 2.0 * h) * 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * (1.0 - tail_second_moment);
}

}  // namespace

TEST(Value, Examples) {
  EXPECT_DOUBLE_EQ(QuadraticFunctional::scalar(1.0)->value(P(2.0)), 2.0);
  EXPECT_EQ(NegSqrtFunctional().value(P(-1.0)), kInf);
  EXPECT_DOUBLE_EQ(NegSqrtFunctional().value(P(4.0)), -2.0);
  EXPECT_DOUBLE_EQ(AbsNormFunctional(2.0).value((Vector(2) << 1.0, -3.0).finished()), 8.0);
}

TEST(QuantileEntropyValue, GaussianAgainstTruncatedOracle) {
  QuantileEntropy H;
  for (std::size_t M : {64, 256, 1024}) {
    const double v = H.value(gaussian_quantile(0.0, 1.0, M));
    EXPECT_NEAR(v, truncated_gaussian_entropy(M), 2e-3 / static_cast<double>(M) * 64.0) << M;
  }
}

TEST(QuantileEntropyValue, ApproachesContinuumGaussianEntropy) {
  // -1/2 log(2 pi e) = -1.418939; the dropped tails shrink like h log(1/h)
  const double exact = -0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  EXPECT_NEAR(exact, -1.418939, 1e-6);
  EXPECT_NEAR(QuantileEntropy().value(gaussian_quantile(0.0, 1.0, 4096)), exact, 5e-3);
  const double at256 = QuantileEntropy().value(gaussian_quantile(0.0, 1.0, 256));
  EXPECT_GT(std::abs(at256 - exact), 5e-3);  // at M = 256 the truncation is still visible
  // the sum has M - 1 gaps weighted 1/M
  EXPECT_NEAR(QuantileEntropy().value(gaussian_quantile(0.0, 4.0, 256)) - at256, -255.0 / 256.0 * std::log(2.0), 1e-12);
}

TEST(QuantileEntropyValue, InfiniteOffStrictMonotone) {
  QuantileEntropy H;
  EXPECT_EQ(H.value((Vector(3) << 0.0, 0.0, 1.0).finished()), kInf);
  EXPECT_EQ(H.value((Vector(3) << 0.0, 2.0, 1.0).finished()), kInf);
}

TEST(Gradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  const Point q = gaussian_quantile(0.2, 1.5, 24);
  std::vector<FunctionalHandle> fs = {std::make_shared<QuantileEntropy>(), QuantilePotential::harmonic(2.0),
                                      fokker_planck_functional(1.0)};
  for (const auto& f : fs) {
    const Vector g = *f->gradient(q);
    const Eigen::MatrixXd H = Eigen::MatrixXd(*f->hessian(q));
    for (Eigen::Index i = 0; i < q.size(); i += 5) {
      const double h = 1e-6;
      Point a = q, b = q;
      a[i] += h;
      b[i] -= h;
      EXPECT_NEAR(g[i], (f->value(a) - f->value(b)) / (2.0 * h), 1e-6) << f->name();
      const Vector col = (*f->gradient(a) - *f->gradient(b)) / (2.0 * h);
      EXPECT_LT((col - H.col(i)).cwiseAbs().maxCoeff(), 1e-4 * (1.0 + H.col(i).cwiseAbs().maxCoeff())) << f->name();
    }
  }
}

TEST(MoreauYosida, QuadraticAndHuberExamples) {
  auto q = QuadraticFunctional::scalar(1.0);
  EXPECT_NEAR(moreau_yosida_value(*q, R1, 1.0, P(1.0)), 0.25, 1e-14);
  EXPECT_NEAR(moreau_yosida_value(*q, R1, 1.0, P(1.0)),
              oracle_min([](double y) { return 0.5 * y * y; }, 1.0, 1.0, -5.0, 5.0), 1e-10);
  AbsNormFunctional a(1.0);
  EXPECT_NEAR(moreau_yosida_value(a, R1, 0.5, P(1.0)), 0.75, 1e-14);
  EXPECT_NEAR(moreau_yosida_value(a, R1, 0.5, P(1.0)),
              oracle_min([](double y) { return std::abs(y); }, 1.0, 0.5, -5.0, 5.0), 1e-10);
}

TEST(MoreauYosida, NegSqrtMatchesOneDimensionalOracle) {
  NegSqrtFunctional f;
  for (double x : {0.0, 0.3, 2.0})
    for (double tau : {0.05, 0.5, 2.0}) {
      const double oracle = oracle_min([](double y) { return -std::sqrt(y); }, x, tau, 0.0, 50.0);
      EXPECT_NEAR(moreau_yosida_value(f, R1, tau, P(x)), oracle, 1e-9) << x << " " << tau;
    }
}

TEST(MoreauYosida, BelowValueAndNonincreasingInTau) {
  std::vector<std::pair<FunctionalHandle, Point>> cases = {
      {QuadraticFunctional::scalar(2.0, 1.0), P(3.0)},
      {std::make_shared<AbsNormFunctional>(0.7), P(-1.2)},
      {std::make_shared<NegSqrtFunctional>(), P(0.0)},
      {std::make_shared<NegSqrtFunctional>(), P(1.5)},
  };
  for (const auto& [f, x] : cases) {
    double prev = f->value(x);
    for (double tau : {1e-3, 1e-2, 0.1, 0.3, 1.0, 3.0}) {
      const double v = moreau_yosida_value(*f, R1, tau, x);
      EXPECT_LE(v, prev + 1e-12) << f->name() << " tau=" << tau;
      prev = v;
    }
  }
  QuantileSpace Q(32);
  QuantileEntropy H;
  const Point q = gaussian_quantile(0.0, 1.0, 32);
  double prev = H.value(q);
  for (double tau : {1e-3, 1e-2, 0.1}) {
    const double v = moreau_yosida_value(H, Q, tau, q);
    EXPECT_LE(v, prev + 1e-12);
    prev = v;
  }
}

TEST(MetricSlope, Examples) {
  EXPECT_DOUBLE_EQ(metric_slope(*QuadraticFunctional::scalar(1.0), R1, P(2.0)), 2.0);
  EXPECT_EQ(metric_slope(AbsNormFunctional(1.0), R1, P(0.0)), 0.0);
  EXPECT_DOUBLE_EQ(metric_slope(NegSqrtFunctional(), R1, P(0.25)), 1.0);
  EXPECT_EQ(metric_slope(NegSqrtFunctional(), R1, P(0.0)), kInf);
  EXPECT_EQ(metric_slope(NegSqrtFunctional(), R1, P(-1.0)), kInf);
}

TEST(MetricSlope, QuadraticSlopeIsResidualNorm) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  Eigen::MatrixXd B(3, 3);
  for (auto& v : B.reshaped()) v = n(rng);
  const Eigen::MatrixXd A = B * B.transpose();
  const Vector b = (Vector(3) << 1.0, -2.0, 0.5).finished();
  QuadraticFunctional f(A, b);
  EuclideanSpace X(3);
  for (int k = 0; k < 20; ++k) {
    Point x(3);
    for (auto& v : x) v = n(rng);
    EXPECT_NEAR(metric_slope(f, X, x), (A * x - b).norm(), 1e-12 * (1.0 + (A * x - b).norm()));
  }
}

TEST(MetricSlope, SampledEstimatorAgreesWithAnalyticOnSmoothFunctionals) {
  // the sampled estimator is a lower bound that is close for smooth functionals
  ScalarFunctional cosh_f("cosh", [](double x) { return std::cosh(x); }, [](double x) { return std::sinh(x); },
                          [](double x) { return std::cosh(x); }, 1.0);
  for (double x : {-1.0, 0.3, 2.0}) {
    const double exact = std::abs(std::sinh(x));
    const double est = sampled_metric_slope(cosh_f, R1, P(x));
    EXPECT_LE(est, exact + 1e-2 * (1.0 + std::abs(x)) * std::cosh(std::abs(x) + 0.1));
    EXPECT_NEAR(est, exact, 3e-2 * (1.0 + std::abs(x)) * std::cosh(std::abs(x)));
  }
  EXPECT_EQ(sampled_metric_slope(NegSqrtFunctional(), R1, P(0.0)), kInf);
}

TEST(GlobalSlope, Examples) {
  std::vector<Point> grid;
  for (int k = -4000; k <= 4000; ++k)
    if (k != 2000) grid.push_back(P(k * 1e-3));
  EXPECT_NEAR(global_slope(*QuadraticFunctional::scalar(1.0), R1, 1.0, P(2.0), grid), 2.0, 1e-3);
  std::vector<Point> grid1;
  for (const auto& p : grid)
    if (p[0] != 1.0) grid1.push_back(p);
  EXPECT_NEAR(global_slope(AbsNormFunctional(1.0), R1, 0.0, P(1.0), grid1), 1.0, 1e-3);
  EXPECT_EQ(global_slope(NegSqrtFunctional(), R1, 0.0, P(-1.0), grid), kInf);
  EXPECT_THROW(global_slope(NegSqrtFunctional(), R1, 0.0, P(1.0), {}), Error);
}

TEST(SlopeProperty, MetricSlopeBelowGlobalSlope) {
  // l_lambda(x) >= |d phi|(x): probes along the steepest descent direction at
  // shrinking radii approach the slope from below at rate O(r), so the
  // comparison carries an O(r_min) slack.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n;
  std::vector<std::tuple<FunctionalHandle, SpaceHandle, double>> cases = {
      {QuadraticFunctional::scalar(1.5, 0.3), std::make_shared<EuclideanSpace>(1), 1.5},
      {std::make_shared<AbsNormFunctional>(0.8), std::make_shared<EuclideanSpace>(3), 0.0},
      {std::make_shared<NegSqrtFunctional>(), std::make_shared<EuclideanSpace>(1), 0.0},
  };
  for (const auto& [f, X, lam] : cases) {
    for (int trial = 0; trial < 25; ++trial) {
      Point x(static_cast<Eigen::Index>(X->dimension()));
      for (auto& v : x) v = f->name() == "neg-sqrt" ? 0.1 + std::abs(n(rng)) : n(rng);
      const double S = metric_slope(*f, *X, x);
      Vector dir = f->gradient(x) ? Vector(-*f->gradient(x)) : Vector(-x.cwiseSign());
      if (!(dir.norm() > 0.0)) continue;
      dir /= dir.norm();
      std::vector<Point> probes;
      for (double r = 1e-2; r > 1e-7; r *= 0.5) probes.push_back(x + r * dir);
      for (int k = 0; k < 32; ++k) {
        Point y = x;
        for (auto& v : y) v += n(rng);
        probes.push_back(y);
      }
      const double G = global_slope(*f, *X, lam, x, probes);
      EXPECT_LE(S, G + 1e-5 * (1.0 + S)) << f->name();
    }
  }
}

TEST(McCann, Examples) {
  std::vector<double> grid;
  for (int k = -20; k <= 20; ++k) grid.push_back(0.25 * k);
  EXPECT_TRUE(mccann_check([](double r) { return r * std::log(r); }, grid));
  EXPECT_TRUE(mccann_check([](double r) { return r * r; }, grid));
  EXPECT_FALSE(mccann_check([](double r) { return -r * r; }, grid));
  EXPECT_THROW(mccann_check([](double r) { return r; }, {0.0, 1.0}), Error);
}

TEST(Duality, QuadraticEqualityAndHuberLimit) {
  const auto rep = duality_slope_check(*QuadraticFunctional::scalar(1.0), R1, 1.0, P(1.0), {1.0, 0.1, 0.01, 1e-3});
  EXPECT_TRUE(rep.pass());
  for (const auto& s : rep.samples())
    if (s.label.rfind("tau=", 0) == 0) EXPECT_NEAR(s.lhs, 0.5, 1e-12);
  // |x| - (|x| - tau/2) = tau/2, so (phi - phi_tau)/tau = 1/2 exactly for tau <= 1
  const auto abs_rep = duality_slope_check(AbsNormFunctional(1.0), R1, 0.0, P(1.0), {0.5, 0.1, 1e-3});
  EXPECT_TRUE(abs_rep.pass());
  const auto at_min = duality_slope_check(*QuadraticFunctional::scalar(1.0), R1, 1.0, P(0.0), {0.1, 0.01});
  EXPECT_TRUE(at_min.pass());
  EXPECT_LE(at_min.max_residual(), 0.0);
}

TEST(EntropyProperty, ConvexAlongGeodesics) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  QuantileSpace Q(48);
  QuantileEntropy H;
  for (int trial = 0; trial < 30; ++trial) {
    Point a = gaussian_quantile(n(rng), 0.5 + std::abs(n(rng)), 48);
    Point b(48);
    double acc = n(rng);
    for (auto& v : b) v = acc += 0.01 + std::abs(n(rng)) * 0.2;
    auto rep = lambda_convexity_check(H, Q, a, b, {0.1, 0.25, 0.5, 0.75, 0.9}, 0.0);
    EXPECT_TRUE(rep.pass());
    EXPECT_GE(-rep.max_residual(), -1e-10);
  }
}
