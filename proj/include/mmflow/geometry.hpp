#pragma once

// Intermediate points, dyadic chains, convexity audits and lower-bound constants.

#include "mmflow/audit.hpp"
#include "mmflow/core.hpp"
#include "mmflow/spaces.hpp"

#include <functional>
#include <map>
#include <random>

namespace mmflow {

/// (theta, eps)-intermediate point test:
/// d^2(x0,x)/theta + d^2(x,x1)/(1-theta) <= d^2(x0,x1)(1 + eps^2 theta(1-theta)).
inline bool check_intermediate(const MetricSpace& X, const Point& x0, const Point& x1, const Point& x, double theta,
                               double eps) {
  require(theta > 0.0 && theta < 1.0, "check_intermediate: theta must lie in (0,1)");
  require(eps >= 0.0 && eps < 1.0, "check_intermediate: eps must lie in [0,1)");
  const double d2 = X.dist2(x0, x1);
  const double lhs = X.dist2(x0, x) / theta + X.dist2(x, x1) / (1.0 - theta);
  return lhs <= d2 * (1.0 + eps * eps * theta * (1.0 - theta)) + 1e-12;
}

/// The two metric consequences every accepted intermediate point must satisfy:
/// the speed balance |d(x0,x)/theta - d(x,x1)/(1-theta)| <= d eps and the
/// two-leg length d(x0,x) + d(x,x1) <= d sqrt(1 + eps^2 theta(1-theta)).
inline AuditReport intermediate_consequences(const MetricSpace& X, const Point& x0, const Point& x1, const Point& x,
                                             double theta, double eps) {
  AuditReport rep("intermediate-consequences", 1e-12, 1e-12);
  const double d = X.dist(x0, x1), a = X.dist(x0, x), b = X.dist(x, x1);
  rep.add("speed-balance", std::abs(a / theta - b / (1.0 - theta)), d * eps);
  rep.add("two-leg-length", a + b, d * std::sqrt(1.0 + eps * eps * theta * (1.0 - theta)));
  return rep.finalize();
}

/// Exact geodesic point moved by a metric offset `fraction * d eps theta(1-theta)`
/// along a coordinate direction orthogonal to x1 - x0. With fraction <= 1 the
/// result is a (theta, eps)-intermediate point; above 1 it is not.
inline Point perturbed_intermediate(const MetricSpace& X, const Point& x0, const Point& x1, double theta, double eps,
                                    const Vector& normal, double fraction = 0.9) {
  Vector chord = x1 - x0;
  Vector n = normal;
  if (chord.norm() > 0.0) n -= (n.dot(chord) / chord.squaredNorm()) * chord;
  require(n.norm() > 0.0, "perturbed_intermediate: normal direction is parallel to the chord");
  n /= n.norm();
  const double delta = fraction * X.dist(x0, x1) * eps * theta * (1.0 - theta);
  return X.intermediate(x0, x1, theta) + (delta / X.scale()) * n;
}

struct ChainResult {
  std::map<double, Point> points;  // keyed by the dyadic parameter k / 2^levels
  int levels = 0;
  double lipschitz_bound = 0.0;    // d(x0,x1) exp(sum of the eps used)
};

/// Midpoint oracle: (space, left, right, eps_n, level, index) -> eps_n-midpoint.
using MidpointOracle =
    std::function<Point(const MetricSpace&, const Point&, const Point&, double, int, long)>;

/// Builds {x_theta : theta in D_levels} by recursive eps_n-midpoint insertion.
inline ChainResult dyadic_chain(const MetricSpace& X, const Point& x0, const Point& x1, int levels,
                                const std::vector<double>& eps_schedule, const MidpointOracle& oracle = nullptr) {
  require(levels >= 1, "dyadic_chain: levels must be >= 1");
  require(eps_schedule.size() >= static_cast<std::size_t>(levels), "dyadic_chain: eps schedule shorter than levels");
  ChainResult out;
  out.levels = levels;
  out.points.emplace(0.0, x0);
  out.points.emplace(1.0, x1);
  double eps_sum = 0.0;
  for (int n = 1; n <= levels; ++n) {
    const double eps = eps_schedule[static_cast<std::size_t>(n - 1)];
    require(eps >= 0.0 && eps < 1.0, "dyadic_chain: eps schedule entries must lie in [0,1)");
    eps_sum += eps;
    std::vector<std::pair<double, Point>> fresh;
    long idx = 0;
    for (auto it = out.points.begin(); std::next(it) != out.points.end(); ++it, ++idx) {
      auto nx = std::next(it);
      const double key = 0.5 * (it->first + nx->first);
      Point mid = oracle ? oracle(X, it->second, nx->second, eps, n, idx) : X.intermediate(it->second, nx->second, 0.5);
      if (oracle && !check_intermediate(X, it->second, nx->second, mid, 0.5, eps))
        throw Error("dyadic_chain: oracle midpoint fails the intermediate-point test at level " + std::to_string(n));
      fresh.emplace_back(key, std::move(mid));
    }
    for (auto& kv : fresh) out.points.emplace(kv.first, std::move(kv.second));
  }
  out.lipschitz_bound = X.dist(x0, x1) * std::exp(eps_sum);
  return out;
}

/// Exhaustive pairwise check d(x_a, x_b) <= lipschitz_bound |a - b|.
inline AuditReport chain_lipschitz_check(const MetricSpace& X, const ChainResult& chain) {
  AuditReport rep("dyadic-chain-lipschitz", 1e-12, 1e-12);
  for (auto a = chain.points.begin(); a != chain.points.end(); ++a)
    for (auto b = std::next(a); b != chain.points.end(); ++b)
      rep.add(std::to_string(a->first) + "," + std::to_string(b->first), X.dist(a->second, b->second),
              chain.lipschitz_bound * (b->first - a->first));
  return rep.finalize();
}

/// phi(x_theta) <= (1-theta) phi(x0) + theta phi(x1) - lambda/2 theta(1-theta) d^2 along the geodesic.
inline AuditReport lambda_convexity_check(const Functional& f, const MetricSpace& X, const Point& x0, const Point& x1,
                                          const std::vector<double>& theta_grid, double lambda) {
  const double f0 = f.value(x0), f1 = f.value(x1);
  require(std::isfinite(f0) && std::isfinite(f1), "lambda_convexity_check: endpoints must lie in the domain");
  AuditReport rep("lambda-convexity", 1e-9 * (1.0 + std::abs(f0) + std::abs(f1)));
  const double d2 = X.dist2(x0, x1);
  for (double th : theta_grid) {
    require(th > 0.0 && th < 1.0, "lambda_convexity_check: theta outside (0,1)");
    const double lhs = f.value(X.intermediate(x0, x1, th));
    const double rhs = (1.0 - th) * f0 + th * f1 - 0.5 * lambda * th * (1.0 - th) * d2;
    rep.add("theta=" + std::to_string(th), lhs, rhs);
  }
  return rep.finalize();
}

/// Seeded probe cloud in the closed unit ball around o: 64 directions x 8 radii.
/// In the quantile space directions are nondecreasing vectors so every probe
/// stays monotone.
inline std::vector<Point> unit_ball_probes(const MetricSpace& X, const Point& o, std::uint64_t seed,
                                           int directions = 64, int radii = 8) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const Eigen::Index n = o.size();
  const bool monotone = dynamic_cast<const QuantileSpace*>(&X) != nullptr;
  std::vector<Point> out;
  for (int k = 0; k < directions; ++k) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    if (monotone) {
      std::sort(v.data(), v.data() + n);
      if (k % 2 == 1) v = -v.reverse().eval();  // also probe with the reversed shape
    }
    if (!(v.norm() > 0.0)) continue;
    v /= X.scale() * v.norm();  // unit metric length
    for (int r = 1; r <= radii; ++r) out.push_back(o + (static_cast<double>(r) / radii) * v);
  }
  return out;
}

struct LowerBoundConstants {
  double m_o = 0.0;        // inf of phi on the unit ball around o (estimated)
  double phi_o = 0.0;      // quadratic lower-bound constant
  double ell_o = 0.0;      // linear-growth coefficient
  double phi_o_lin = 0.0;  // linear lower-bound constant for phi - lambda/2 d^2(., o)
  AuditReport report;
};

/// Constants of the quadratic and linear lower bounds around o, audited on the probes.
/// `analytic_m_o` replaces the probe minimum when the infimum is known.
inline LowerBoundConstants lower_bound_constants(const Functional& f, const MetricSpace& X, const Point& o,
                                                 double lambda, double kappa_o, const std::vector<Point>& probes,
                                                 std::optional<double> analytic_m_o = std::nullopt) {
  require(kappa_o > -lambda, "lower_bound_constants: need kappa_o > -lambda");
  const double fo = f.value(o);
  require(std::isfinite(fo), "lower_bound_constants: o must lie in the domain");
  LowerBoundConstants c;
  if (analytic_m_o) {
    c.m_o = *analytic_m_o;
  } else {
    c.m_o = fo;
    for (const auto& y : probes)
      if (X.dist(y, o) <= 1.0 + 1e-12) c.m_o = std::min(c.m_o, f.value(y));
  }
  const double lp = positive_part(lambda), lm = negative_part(lambda);
  const double k = lambda + kappa_o;
  c.phi_o = fo - (fo - c.m_o + 0.5 * lp) * (fo - c.m_o + 0.5 * lp) / (2.0 * k) - 0.5 * k;
  c.ell_o = fo - c.m_o + 0.5 * lambda;
  c.phi_o_lin = c.m_o - 0.5 * lm;

  AuditReport rep("lower-bounds", 1e-10, 1e-12);
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double fy = f.value(probes[i]);
    if (!std::isfinite(fy)) continue;
    const double d = X.dist(probes[i], o);
    // phi(x) + kappa_o/2 d^2 >= phi_o  and  phi(x) - lambda/2 d^2 + ell_o d >= phi_o_lin.
    rep.add("quadratic#" + std::to_string(i), c.phi_o, fy + 0.5 * kappa_o * d * d);
    rep.add("linear#" + std::to_string(i), c.phi_o_lin, fy - 0.5 * lambda * d * d + c.ell_o * d);
  }
  if (!analytic_m_o) rep.set_note("m_o estimated from probes on the discretized space");
  c.report = rep.finalize();
  return c;
}

/// Flow map t, x -> S_t x.
using FlowMap = std::function<Point(double, const Point&)>;

/// phi(S_t x_{theta,eps}) <= (1-theta) phi(x0) + theta phi(x1)
///   - 1/2 (lambda - eps^2 / E_lambda(t)) theta(1-theta) d^2(x0, x1).
/// `x_theta` defaults to the exact geodesic point.
inline AuditReport flowed_convexity_check(const FlowMap& flow, const Functional& f, const MetricSpace& X,
                                          const Point& x0, const Point& x1, double theta, double eps,
                                          const std::vector<double>& t_grid, double lambda,
                                          std::optional<Point> x_theta = std::nullopt) {
  require(theta > 0.0 && theta < 1.0, "flowed_convexity_check: theta outside (0,1)");
  const Point x = x_theta ? *x_theta : X.intermediate(x0, x1, theta);
  if (x_theta && !check_intermediate(X, x0, x1, x, theta, eps))
    throw Error("flowed_convexity_check: supplied point is not a (theta, eps)-intermediate point");
  const double f0 = f.value(x0), f1 = f.value(x1), d2 = X.dist2(x0, x1);
  AuditReport rep("flowed-convexity", 1e-9 * (1.0 + std::abs(f0) + std::abs(f1)));
  for (double t : t_grid) {
    require(t > 0.0, "flowed_convexity_check: times must be > 0");
    const double modulus = lambda - eps * eps / exp_primitive(lambda, t);
    const double lhs = f.value(flow(t, x));
    const double rhs = (1.0 - theta) * f0 + theta * f1 - 0.5 * modulus * theta * (1.0 - theta) * d2;
    rep.add("t=" + std::to_string(t), lhs, rhs);
  }
  return rep.finalize();
}

}  // namespace mmflow
