#pragma once

// One proximal step y -> argmin d^2(x,y)/(2 tau) + phi(y), accepted under the
// Ekeland-relaxed conditions, plus the Moreau-Yosida value built on it.

#include "mmflow/audit.hpp"
#include "mmflow/core.hpp"
#include "mmflow/functionals.hpp"

#include <Eigen/SparseCholesky>
#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cstdio>

namespace mmflow {

enum class InnerMethod { Newton, Gradient };

struct SolverConfig {
  double tol = 1e-10;           // dual-norm residual target of the inner solver
  int max_iter = 200;
  int probe_count = 16;         // coordinates perturbed by the acceptance probes
  int grid_points = 61;         // 1D scan on [x - 3d, x + 3d]
  bool force_inner = false;     // bypass closed-form proximal maps
  bool check_probes = true;     // skip the probe net (Moreau-Yosida values only)
  InnerMethod method = InnerMethod::Newton;
};

struct ResolventResult {
  Point point;
  double objective = kInf;          // d^2(x, point)/(2 tau) + phi(point)
  double base_objective_phi = kInf; // phi(point)
  double inner_residual = 0.0;      // dual norm of the penalized gradient; 0 for closed forms
  bool accepted_90bis = false;      // Ekeland inequality on every probe
  bool accepted_90 = false;         // objective <= phi(x)
  double worst_violation = -kInf;   // largest signed residual of the Ekeland inequality
  int iterations = 0;
  bool converged = true;
  bool closed_form = false;
  bool fell_back = false;           // candidate replaced by x
  bool certified = false;           // convexity + small gradient imply the Ekeland inequality globally
};

struct EkelandCheck {
  bool holds_relaxed = true;    // d^2(x,c)/2tau + phi(c) <= d^2(x,y)/2tau + phi(y) + eta/2 d(x,c) d(y,c)
  bool holds_descent = true;    // d^2(x,c)/2tau + phi(c) <= phi(x)
  double worst_violation = -kInf;
};

inline double penalized_objective(const Functional& f, const MetricSpace& X, double tau, const Point& x, const Point& y) {
  const double fy = f.value(y);
  if (!std::isfinite(fy)) return kInf;
  return X.dist2(x, y) / (2.0 * tau) + fy;
}

/// Relative slack absorbing round-off in objective comparisons.
inline double objective_slack(double v) { return 1e-11 * (1.0 + (std::isfinite(v) ? std::abs(v) : 0.0)); }

inline EkelandCheck check_ekeland_conditions(const Functional& f, const MetricSpace& X, double tau, double eta,
                                             const Point& x, const Point& c, const std::vector<Point>& probes) {
  require(!probes.empty(), "check_ekeland_conditions: probe set is empty");
  require(tau > 0.0 && eta >= 0.0, "check_ekeland_conditions: need tau > 0, eta >= 0");
  EkelandCheck out;
  const double dxc = X.dist(x, c);
  const double lhs = penalized_objective(f, X, tau, x, c);
  const double slack = objective_slack(lhs);
  for (const auto& y : probes) {
    const double fy = f.value(y);
    if (!std::isfinite(fy)) continue;
    const double rhs = X.dist2(x, y) / (2.0 * tau) + fy + 0.5 * eta * dxc * X.dist(y, c);
    const double r = lhs - rhs;
    out.worst_violation = std::max(out.worst_violation, r);
    if (r > slack) out.holds_relaxed = false;
  }
  const double fx = f.value(x);
  out.holds_descent = !std::isfinite(fx) ? std::isfinite(lhs) || lhs == kInf : lhs <= fx + slack;
  if (std::isfinite(fx) && !std::isfinite(lhs)) out.holds_descent = false;
  return out;
}

/// Falsification net for the Ekeland inequality around a candidate c.
inline std::vector<Point> default_ekeland_probes(const MetricSpace& X, const Point& x, const Point& c,
                                                 const std::optional<Vector>& residual_dir, int probe_count,
                                                 int grid_points) {
  std::vector<Point> probes{x};
  const double d = X.dist(x, c);
  const double w = X.scale();
  const double base = d > 0.0 ? d : 1e-3 * (1.0 + w * x.norm());
  const Eigen::Index n = c.size();
  std::vector<Vector> dirs;
  const Eigen::Index k = std::min<Eigen::Index>(n, std::max(1, probe_count));
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index idx = k == n ? j : (j * (n - 1)) / std::max<Eigen::Index>(1, k - 1);
    dirs.push_back(Vector::Unit(n, idx));
  }
  if (residual_dir && residual_dir->norm() > 0.0) dirs.push_back(*residual_dir / residual_dir->norm());
  if (d > 0.0) dirs.push_back((x - c) / (x - c).norm());
  for (double r : {base, base / 10.0, base / 100.0}) {
    const double step = r / w;
    for (const auto& v : dirs) {
      probes.push_back(c + step * v);
      probes.push_back(c - step * v);
    }
  }
  if (n == 1 && grid_points >= 2) {
    const double lo = x[0] - 3.0 * base / w, hi = x[0] + 3.0 * base / w;
    for (int i = 0; i < grid_points; ++i)
      probes.push_back(Point::Constant(1, lo + (hi - lo) * i / (grid_points - 1)));
  }
  return probes;
}

namespace detail {

struct InnerOutcome {
  Point y;
  double residual = kInf;
  int iterations = 0;
  bool converged = false;
};

inline std::optional<Vector> penalized_gradient(const Functional& f, const MetricSpace& X, double tau, const Point& x,
                                                const Point& y) {
  auto g = f.gradient(y);
  if (!g) return std::nullopt;
  return Vector(X.scale() * X.scale() * (y - x) / tau + *g);
}

/// Damped Newton (or preconditioned gradient) descent on the penalized
/// objective, started at x, with Armijo backtracking. Infinite values make
/// the line search back off, so iterates never leave the domain.
inline InnerOutcome inner_solve(const Functional& f, const MetricSpace& X, double tau, double eta, const Point& x,
                                const SolverConfig& cfg) {
  const double w2 = X.scale() * X.scale();
  InnerOutcome out;
  out.y = x;
  auto F = [&](const Point& y) { return penalized_objective(f, X, tau, x, y); };
  double Fy = F(out.y);
  require(std::isfinite(Fy), "solve_resolvent: starting point outside the domain and no closed form");
  for (int it = 0; it <= cfg.max_iter; ++it) {
    auto G = penalized_gradient(f, X, tau, x, out.y);
    require(G.has_value(), "solve_resolvent: functional has no gradient at an inner iterate");
    out.residual = X.dual_norm(*G);
    out.iterations = it;
    double stop = cfg.tol;
    if (eta > 0.0) stop = std::min(stop, 0.9 * 0.5 * eta * X.dist(x, out.y));
    if (out.residual <= stop || out.residual == 0.0) {
      out.converged = true;
      return out;
    }
    if (it == cfg.max_iter) break;
    Vector p;
    bool have_newton = false;
    if (cfg.method == InnerMethod::Newton) {
      if (auto H = f.hessian(out.y)) {
        SparseMatrix K = *H;
        SparseMatrix I(K.rows(), K.cols());
        I.setIdentity();
        K += (w2 / tau) * I;
        Eigen::SimplicialLDLT<SparseMatrix> ldlt(K);
        if (ldlt.info() == Eigen::Success) {
          p = -ldlt.solve(*G);
          have_newton = ldlt.info() == Eigen::Success && p.allFinite() && G->dot(p) < 0.0;
        }
      }
    }
    if (!have_newton) p = -(tau / w2) * *G;
    const double slope = G->dot(p);
    double alpha = 1.0;
    bool moved = false;
    while (alpha > 1e-20) {
      Point trial = out.y + alpha * p;
      const double Ft = F(trial);
      bool accept = std::isfinite(Ft) && Ft <= Fy + 1e-4 * alpha * slope;
      // Near the minimum the decrease drops below round-off; fall back to
      // requiring a smaller gradient at an objective equal up to rounding.
      if (!accept && std::isfinite(Ft) && Ft <= Fy + 1e-14 * (1.0 + std::abs(Fy))) {
        auto Gt = penalized_gradient(f, X, tau, x, trial);
        accept = Gt && X.dual_norm(*Gt) < 0.5 * out.residual;
      }
      if (accept) {
        out.y = std::move(trial);
        Fy = Ft;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
  }
  auto G = penalized_gradient(f, X, tau, x, out.y);
  out.residual = G ? X.dual_norm(*G) : kInf;
  return out;
}

/// Brent minimization of the 1D penalized objective, for functionals without
/// a gradient oracle.
inline InnerOutcome brent_solve_1d(const Functional& f, const MetricSpace& X, double tau, const Point& x) {
  const double w2 = X.scale() * X.scale();
  auto F = [&](double y) {
    const double v = penalized_objective(f, X, tau, x, Point::Constant(1, y));
    return std::isfinite(v) ? v : 1e300;
  };
  double width = 1.0 + std::abs(x[0]);
  const double fx = f.value(x);
  if (std::isfinite(fx)) width += std::sqrt(2.0 * tau * std::max(0.0, fx - f.value(x)) / w2);
  // Grow the bracket until the minimum is interior.
  double lo = x[0] - width, hi = x[0] + width;
  for (int k = 0; k < 60; ++k) {
    const auto r = boost::math::tools::brent_find_minima(F, lo, hi, 52);
    if (r.first > lo + 1e-9 * width && r.first < hi - 1e-9 * width) {
      InnerOutcome out;
      out.y = Point::Constant(1, r.first);
      out.residual = 0.0;
      out.converged = true;
      return out;
    }
    width *= 2.0;
    lo = x[0] - width;
    hi = x[0] + width;
  }
  throw Error("solve_resolvent: 1D bracket search failed");
}

}  // namespace detail

/// Moreau-Yosida-Ekeland resolvent of phi at x.
inline ResolventResult solve_resolvent(const Functional& f, const MetricSpace& X, double tau, double eta, const Point& x,
                                       const SolverConfig& cfg = {}) {
  require(tau > 0.0 && std::isfinite(tau), "solve_resolvent: tau must be > 0");
  require(eta >= 0.0, "solve_resolvent: eta must be >= 0");
  X.check_dim(x);
  const double lam = f.lambda_hint();
  if (lam < 0.0 && std::isfinite(lam))
    require(tau < 0.9 / (-lam), "solve_resolvent: tau above the quadratic lower-bound limit 0.9/(-lambda)");

  ResolventResult res;
  std::optional<Point> cf;
  if (!cfg.force_inner) cf = f.closed_form_prox(X, tau, x);
  if (cf) {
    res.point = *cf;
    res.closed_form = true;
    res.inner_residual = 0.0;
  } else if (f.gradient(x)) {
    auto inner = detail::inner_solve(f, X, tau, eta, x, cfg);
    res.point = inner.y;
    res.inner_residual = inner.residual;
    res.iterations = inner.iterations;
    res.converged = inner.converged;
  } else if (x.size() == 1) {
    auto inner = detail::brent_solve_1d(f, X, tau, x);
    res.point = inner.y;
    res.inner_residual = inner.residual;
    res.converged = inner.converged;
  } else {
    throw Error("solve_resolvent: no closed form and no gradient for " + f.name());
  }
  res.point = X.repair(res.point);

  const double fx = f.value(x);
  res.objective = penalized_objective(f, X, tau, x, res.point);
  if (std::isfinite(fx) && !(res.objective <= fx)) {
    res.point = x;
    res.objective = fx;
    res.fell_back = true;
  }
  res.base_objective_phi = f.value(res.point);

  const double d = X.dist(x, res.point);
  const bool convex = std::isfinite(lam) && 1.0 / tau + lam >= 0.0;
  res.certified = convex && res.inner_residual <= 0.5 * eta * d;

  if (cfg.check_probes) {
    auto G = detail::penalized_gradient(f, X, tau, x, res.point);
    auto probes = default_ekeland_probes(X, x, res.point, G, cfg.probe_count, cfg.grid_points);
    auto chk = check_ekeland_conditions(f, X, tau, eta, x, res.point, probes);
    res.accepted_90bis = chk.holds_relaxed;
    res.accepted_90 = chk.holds_descent;
    res.worst_violation = chk.worst_violation;
  } else {
    res.accepted_90 = !std::isfinite(fx) || res.objective <= fx + objective_slack(fx);
    res.accepted_90bis = true;
  }
  if (!res.converged && (eta == 0.0 || !res.accepted_90bis))
    throw Error("solve_resolvent: inner solver did not converge (residual " + std::to_string(res.inner_residual) + ")");
  return res;
}

/// phi_tau(x) = min_y d^2(x,y)/(2 tau) + phi(y).
inline double moreau_yosida_value(const Functional& f, const MetricSpace& X, double tau, const Point& x,
                                  SolverConfig cfg = {}) {
  cfg.check_probes = false;
  return solve_resolvent(f, X, tau, 0.0, x, cfg).objective;
}

/// |d phi|(J x) <= (1 + eta tau/2) d(x, J x)/tau for an accepted resolvent point.
inline AuditReport slope_bound_check(const Functional& f, const MetricSpace& X, double tau, double eta, const Point& x,
                                     const ResolventResult& r) {
  AuditReport rep("resolvent-slope-bound", 1e-10, 1e-9);
  if (!(r.accepted_90 && r.accepted_90bis))
    return AuditReport::not_applicable(rep.tag(), "resolvent candidate not accepted");
  const double lhs = metric_slope(f, X, r.point);
  const double rhs = (1.0 + 0.5 * eta * tau) * X.dist(x, r.point) / tau;
  rep.add("tau=" + std::to_string(tau), lhs, rhs);
  return rep.finalize();
}

/// (1 + lambda tau)(phi - phi_tau)/tau <= |d phi|^2/2 on a tau grid, and the
/// value at the smallest tau approaches the right side.
inline AuditReport duality_slope_check(const Functional& f, const MetricSpace& X, double lambda, const Point& x,
                                       const std::vector<double>& tau_grid, double limit_rel_tol = 1e-2) {
  require(!tau_grid.empty(), "duality_slope_check: empty tau grid");
  AuditReport rep("moreau-yosida-duality", 1e-10, 1e-9);
  const double S = metric_slope(f, X, x);
  if (!std::isfinite(S)) return AuditReport::not_applicable(rep.tag(), "x has infinite slope");
  const double half = 0.5 * S * S;
  const double fx = f.value(x);
  double tau_min = kInf, at_min = 0.0;
  for (double tau : tau_grid) {
    require(tau > 0.0 && 1.0 + lambda * tau > 0.0, "duality_slope_check: need tau > 0 and 1 + lambda tau > 0");
    const double q = (1.0 + lambda * tau) * (fx - moreau_yosida_value(f, X, tau, x)) / tau;
    rep.add("tau=" + std::to_string(tau), q, half);
    if (tau < tau_min) {
      tau_min = tau;
      at_min = q;
    }
  }
  // Limit: lower-side gap at the finest tau.
  rep.add("limit tau=" + std::to_string(tau_min), half - at_min, limit_rel_tol * (1.0 + half));
  return rep.finalize();
}

}  // namespace mmflow
