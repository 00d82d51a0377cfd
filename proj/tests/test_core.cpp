#include "mmflow/core.hpp"
#include "mmflow/spaces.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace mmflow;

namespace {

SpaceHandle R(std::size_t d) { return std::make_shared<EuclideanSpace>(d); }

Trajectory line(std::size_t samples, double t1, const std::function<Point(double)>& c, std::size_t d = 1) {
  return Trajectory::sample(R(d), uniform_times(0.0, t1, samples - 1), c);
}

}  // namespace

TEST(ExpPrimitive, Examples) {
  EXPECT_DOUBLE_EQ(exp_primitive(0.0, 2.0), 2.0);
  EXPECT_NEAR(exp_primitive(1.0, 1.0), std::numbers::e - 1.0, 1e-15);
  EXPECT_NEAR(exp_primitive(-2.0, 1.0), (1.0 - std::exp(-2.0)) / 2.0, 1e-15);
  EXPECT_NEAR(exp_primitive(-2.0, 1.0), 0.432332, 1e-6);
}

TEST(ExpPrimitive, SeriesBranchIsContinuousInLambda) {
  // expm1-based oracle away from the switch, on both sides of it
  for (double t : {0.5, 1.0, 3.0})
    for (double lam : {1e-12, -1e-12, 5e-9 / t, -5e-9 / t, 2e-8 / t, -2e-8 / t, 1e-6, -1e-6}) {
      const double oracle = std::expm1(lam * t) / lam;
      EXPECT_NEAR(exp_primitive(lam, t), oracle, 1e-14 * t) << lam << " " << t;
    }
}

TEST(ExpPrimitive, MonotoneAndComparedWithT) {
  for (double lam : {-3.0, -0.5, 0.0, 0.5, 2.0}) {
    double prev = -1.0;
    for (int k = 0; k <= 40; ++k) {
      const double t = 0.05 * k;
      const double v = exp_primitive(lam, t);
      EXPECT_GT(v, prev);
      prev = v;
      if (t > 0.0) {
        if (lam > 0.0) EXPECT_GE(v, t);
        if (lam < 0.0) EXPECT_LE(v, t);
        if (lam == 0.0) EXPECT_EQ(v, t);
      }
    }
  }
}

TEST(Trajectory, RejectsMalformedInput) {
  EXPECT_THROW(Trajectory(R(1), {}, {}), Error);
  EXPECT_THROW(Trajectory(R(1), {0.0, 0.0}, {Point::Zero(1), Point::Zero(1)}), Error);
  EXPECT_THROW(Trajectory(R(1), {0.0, 1.0}, {Point::Zero(1)}), Error);
  EXPECT_THROW(Trajectory(R(1), {0.0}, {Point::Zero(2)}), Error);
  EXPECT_THROW(Trajectory(R(1), {-1.0}, {Point::Zero(1)}), Error);
}

TEST(MetricDerivative, Examples) {
  auto constant = line(11, 1.0, [](double) { return Point::Constant(1, 3.0); });
  for (std::size_t i = 0; i < constant.size(); ++i) EXPECT_EQ(metric_derivative(constant, i), 0.0);

  auto straight = line(21, 2.0, [](double t) { return Point((Vector(2) << 2.0 * t, 0.0).finished()); }, 2);
  for (std::size_t i = 1; i + 1 < straight.size(); ++i) EXPECT_NEAR(metric_derivative(straight, i), 2.0, 1e-12);

  const double h = 1e-3;
  auto decay = line(2001, 2.0, [](double t) { return Point::Constant(1, std::exp(-t)); });
  const std::size_t i1 = 1000;
  ASSERT_NEAR(decay.time(i1), 1.0, 1e-12);
  const double oracle = (std::exp(-(1.0 - h)) - std::exp(-(1.0 + h))) / (2.0 * h);
  EXPECT_NEAR(metric_derivative(decay, i1), oracle, 1e-12);
  EXPECT_NEAR(metric_derivative(decay, i1), 0.367879, 1e-6);
  EXPECT_THROW(metric_derivative(decay, decay.size()), Error);
}

TEST(MetricDerivative, GeodesicSamplingHasConstantSpeed) {
  auto X = R(3);
  const Point x0 = (Vector(3) << 1.0, -2.0, 0.5).finished(), x1 = (Vector(3) << -1.0, 4.0, 2.0).finished();
  auto tr = Trajectory::sample(X, uniform_times(0.0, 1.0, 16), [&](double t) { return X->intermediate(x0, x1, t); });
  for (std::size_t i = 1; i + 1 < tr.size(); ++i) EXPECT_NEAR(metric_derivative(tr, i), X->dist(x0, x1), 1e-12);
}

TEST(CurveLength, Examples) {
  auto seg = line(11, 1.0, [](double t) { return Point((Vector(2) << 3.0 * t, 4.0 * t).finished()); }, 2);
  EXPECT_NEAR(curve_length(seg), 5.0, 1e-14);
  auto constant = line(5, 1.0, [](double) { return Point::Zero(2); }, 2);
  EXPECT_EQ(curve_length(constant), 0.0);
  auto semi = line(1001, std::numbers::pi, [](double t) { return Point((Vector(2) << std::cos(t), std::sin(t)).finished()); }, 2);
  // chordal sum of n equal chords: 2n sin(pi/(2n))
  const double n = 1000.0;
  EXPECT_NEAR(curve_length(semi), 2.0 * n * std::sin(std::numbers::pi / (2.0 * n)), 1e-12);
  EXPECT_NEAR(curve_length(semi), std::numbers::pi, 1e-4);
}

TEST(CurveLength, RefinementNeverDecreasesAndBoundsEndpointDistance) {
  auto c = [](double t) { return Point((Vector(2) << std::cos(3.0 * t), t * t).finished()); };
  double prev = 0.0;
  for (std::size_t n : {2, 4, 8, 16, 32, 64, 128}) {
    auto tr = line(n + 1, 1.0, c, 2);
    const double L = curve_length(tr);
    EXPECT_GE(L, prev - 1e-14);
    EXPECT_GE(L, tr.space().dist(tr.point(0), tr.point(tr.size() - 1)) - 1e-14);
    prev = L;
  }
}

TEST(MetricSpace, IntermediateRejectsThetaOutsideUnitInterval) {
  auto X = R(2);
  EXPECT_THROW(X->intermediate(Point::Zero(2), Point::Ones(2), -0.1), Error);
  EXPECT_THROW(X->intermediate(Point::Zero(2), Point::Ones(2), 1.1), Error);
}
