#pragma once

// Closed-form reference flows, convergence studies, and the uniform
// error-bound auditors for the Minimizing Movement scheme.

#include "mmflow/audit.hpp"
#include "mmflow/core.hpp"
#include "mmflow/functionals.hpp"
#include "mmflow/mm.hpp"
#include "mmflow/resolvent.hpp"
#include "mmflow/spaces.hpp"

#include <algorithm>
#include <cstdio>
#include <future>
#include <map>
#include <ostream>

namespace mmflow {

/// Exact gradient flow t, u0 -> S_t u0 of a catalog system.
struct ReferenceFlow {
  std::string system_id;
  std::function<Point(double, const Point&)> eval;
  std::function<double(const Point&)> slope_at;
};

namespace detail {

/// Fits u0 = m + sigma z against the standard gridded Gaussian quantile z.
inline std::pair<double, double> fit_gridded_gaussian(const Point& u0) {
  const std::size_t M = static_cast<std::size_t>(u0.size());
  const Point z = gaussian_quantile(0.0, 1.0, M);
  const double m = u0.mean();  // z has zero mean by symmetry
  const double sigma = (u0.array() - m).matrix().dot(z) / z.squaredNorm();
  const double resid = (u0 - (Point::Constant(u0.size(), m) + sigma * z)).norm();
  if (!(sigma > 0.0) || resid > 1e-9 * (1.0 + u0.norm()))
    throw Error("reference flow: initial datum is not a gridded Gaussian quantile vector");
  return {m, sigma};
}

}  // namespace detail

/// Reference flow for a catalog functional on its space.
///
/// Quadratic: componentwise in the eigenbasis of A. Abs: shrinkage at speed w.
/// Neg-sqrt: (u0^{3/2} + 3t/4)^{2/3}. Entropy on quantiles: heat flow of a
/// Gaussian, N(m, sigma^2 + 2t). Entropy plus kappa x^2/2: Ornstein-Uhlenbeck.
/// Gaussian flows are evaluated on the scheme's quantile grid.
inline ReferenceFlow reference_flow(const EnergySystem& sys, double ou_kappa = 0.0) {
  const auto& X = sys.X();
  const auto fh = sys.functional;
  const double w2 = X.scale() * X.scale();
  ReferenceFlow rf;
  rf.slope_at = [space = sys.space, fh](const Point& x) { return metric_slope(*fh, *space, x); };
  if (auto q = std::dynamic_pointer_cast<const QuadraticFunctional>(fh)) {
    rf.system_id = "quadratic";
    rf.eval = [q, w2](double t, const Point& u0) {
      const auto& V = q->eigenvectors();
      const Vector c0 = V.transpose() * u0, bk = V.transpose() * q->b();
      Vector c(c0.size());
      for (Eigen::Index k = 0; k < c.size(); ++k) {
        const double mu = q->eigenvalues()[k] / w2;
        c[k] = std::exp(-mu * t) * c0[k] + exp_primitive(-mu, t) * bk[k] / w2;
      }
      return Point(V * c);
    };
  } else if (auto a = std::dynamic_pointer_cast<const AbsNormFunctional>(fh)) {
    rf.system_id = "abs";
    const double speed = a->weight() / w2;
    rf.eval = [speed](double t, const Point& u0) {
      Point u(u0.size());
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        const double m = std::abs(u0[i]) - speed * t;
        u[i] = m > 0.0 ? std::copysign(m, u0[i]) : 0.0;
      }
      return u;
    };
  } else if (std::dynamic_pointer_cast<const NegSqrtFunctional>(fh)) {
    rf.system_id = "neg-sqrt";
    require(w2 == 1.0, "reference flow: neg-sqrt is defined on the real line");
    rf.eval = [](double t, const Point& u0) {
      require(u0[0] >= 0.0, "reference flow: neg-sqrt needs u0 >= 0");
      return Point::Constant(1, std::pow(std::pow(u0[0], 1.5) + 0.75 * t, 2.0 / 3.0));
    };
  } else if (std::dynamic_pointer_cast<const QuantileEntropy>(fh)) {
    rf.system_id = "heat";
    rf.eval = [](double t, const Point& u0) {
      const auto [m, s] = detail::fit_gridded_gaussian(u0);
      return gaussian_quantile(m, s * s + 2.0 * t, static_cast<std::size_t>(u0.size()));
    };
  } else if (std::dynamic_pointer_cast<const SumFunctional>(fh) && ou_kappa > 0.0) {
    rf.system_id = "ornstein-uhlenbeck";
    const double k = ou_kappa;
    rf.eval = [k](double t, const Point& u0) {
      const auto [m, s] = detail::fit_gridded_gaussian(u0);
      const double decay = std::exp(-2.0 * k * t);
      return gaussian_quantile(m * std::exp(-k * t), s * s * decay + (1.0 - decay) / k,
                               static_cast<std::size_t>(u0.size()));
    };
  } else {
    throw Error("reference_flow: no closed-form flow for " + fh->name());
  }
  return rf;
}

struct ErrorSample {
  double t = 0.0;
  double error = 0.0;
};

struct RateRow {
  std::size_t n = 0;
  double tau = 0.0;
  double sup_error = 0.0;
  double bound_rhs = 0.0;
  double eps_measured = 0.0;
  std::vector<ErrorSample> samples;  // grid times and interval midpoints
};

struct RateTable {
  EnergySystem system;
  Point u0;
  double horizon = 0.0;
  double eta = 0.0;
  double lambda = 0.0;  // modulus used by the bounds (clipped to <= 0)
  std::vector<RateRow> rows;
  double fitted_order = std::nan("");
};

/// Least-squares slope of log(error) against log(tau), ignoring zero errors.
inline double fitted_order(const std::vector<RateRow>& rows) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows)
    if (r.sup_error > 0.0) pts.emplace_back(std::log(r.tau), std::log(r.sup_error));
  if (pts.size() < 2) return std::nan("");
  double mx = 0.0, my = 0.0;
  for (auto& p : pts) {
    mx += p.first;
    my += p.second;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxy = 0.0, sxx = 0.0;
  for (auto& p : pts) {
    sxy += (p.first - mx) * (p.second - my);
    sxx += (p.first - mx) * (p.first - mx);
  }
  return sxy / sxx;
}

/// e^{-lambda t} d(u0,U0) + (sqrt(tau t_tau) + t_tau - t) e^{gamma t_tau} |d phi|(U0)
///   + 2 sqrt((eps/tau) t_tau E_{2 gamma}(t_tau)).
inline double regular_bound_rhs(double t, double tau, double lambda, double eta, double eps, double d0, double S0) {
  const double tt = t_ceil(t, tau), g = gamma_of(eta, lambda);
  return std::exp(-lambda * t) * d0 + (std::sqrt(tau * tt) + tt - t) * std::exp(g * tt) * S0 +
         2.0 * std::sqrt(eps / tau * tt * exp_primitive(2.0 * g, tt));
}

/// e^{-lambda t} d(u0,U0) + 10 (tau t_tau)^{1/4} e^{2 gamma t_tau}
///   sqrt(phi(U0) - phi_sigma(U0)),  sigma = E_{lambda - eta}(3 sqrt(tau t_tau)).
inline double domain_bound_rhs(double t, double tau, double lambda, double eta, double d0,
                               const std::function<double(double)>& my_gap) {
  const double tt = t_ceil(t, tau), g = gamma_of(eta, lambda);
  const double sigma = exp_primitive(lambda - eta, 3.0 * std::sqrt(tau * tt));
  return std::exp(-lambda * t) * d0 + 10.0 * std::pow(tau * tt, 0.25) * std::exp(2.0 * g * tt) * std::sqrt(std::max(0.0, my_gap(sigma)));
}

struct StudyOptions {
  double eta = 0.0;
  SolverConfig solver;
  std::optional<double> eps_target;
  unsigned jobs = 1;
  double ou_kappa = 0.0;  // selects the Ornstein-Uhlenbeck reference for sum functionals
};

/// Runs the scheme for every n (tau = horizon/n) and records the sup over grid
/// times and interval midpoints of d(S_t u0, interpolant(t)).
inline RateTable convergence_study(const EnergySystem& sys, const Point& u0, double horizon,
                                   const std::vector<std::size_t>& n_list, const StudyOptions& opt = {}) {
  require(horizon > 0.0, "convergence_study: horizon must be > 0");
  require(!n_list.empty(), "convergence_study: empty n list");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    require(n_list[i] >= 1, "convergence_study: n must be >= 1");
    if (i > 0) require(n_list[i] > n_list[i - 1], "convergence_study: n list must be increasing");
  }
  const auto ref = reference_flow(sys, opt.ou_kappa);
  RateTable tab;
  tab.system = sys;
  tab.u0 = u0;
  tab.horizon = horizon;
  tab.eta = opt.eta;
  tab.lambda = std::min(sys.lambda_hint, 0.0);
  const auto& X = sys.X();
  const double S0 = metric_slope(sys.phi(), X, u0);
  const double f0 = sys.phi().value(u0);

  auto one = [&](std::size_t n) {
    RateRow row;
    row.n = n;
    row.tau = horizon / static_cast<double>(n);
    SchemeParams p;
    p.tau = row.tau;
    p.eta = opt.eta;
    p.N = n;
    p.solver = opt.solver;
    DiscreteTrajectory tr;
    try {
      tr = run_minimizing_movement(sys, p, u0);
    } catch (const SchemeAbort& e) {
      throw Error("convergence_study: n=" + std::to_string(n) + ": " + e.what());
    }
    row.eps_measured = opt.eps_target ? *opt.eps_target : tr.eps;
    for (std::size_t k = 1; k <= n; ++k) {
      for (double t : {(static_cast<double>(k) - 0.5) * row.tau, static_cast<double>(k) * row.tau}) {
        const double e = X.dist(ref.eval(t, u0), interpolant_eval(tr, t));
        row.samples.push_back({t, e});
        row.sup_error = std::max(row.sup_error, e);
      }
    }
    if (std::isfinite(S0)) {
      row.bound_rhs = regular_bound_rhs(horizon, row.tau, tab.lambda, opt.eta, row.eps_measured, 0.0, S0);
    } else {
      auto gap = [&](double sigma) { return f0 - moreau_yosida_value(sys.phi(), X, sigma, u0, opt.solver); };
      row.bound_rhs = domain_bound_rhs(horizon, row.tau, tab.lambda, opt.eta, 0.0, gap);
    }
    return row;
  };

  tab.rows.resize(n_list.size());
  const std::size_t jobs = std::max<unsigned>(1, opt.jobs);
  for (std::size_t start = 0; start < n_list.size(); start += jobs) {
    std::vector<std::future<RateRow>> futs;
    const std::size_t stop = std::min(n_list.size(), start + jobs);
    if (jobs == 1) {
      tab.rows[start] = one(n_list[start]);
      continue;
    }
    for (std::size_t i = start; i < stop; ++i) futs.push_back(std::async(std::launch::async, one, n_list[i]));
    for (std::size_t i = start; i < stop; ++i) tab.rows[i] = futs[i - start].get();
  }
  tab.fitted_order = fitted_order(tab.rows);
  return tab;
}

inline void write_rate_table(std::ostream& os, const RateTable& tab) {
  os << "n,tau,sup_error,bound_rhs,eps_measured,fitted_order\n";
  char buf[256];
  for (const auto& r : tab.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.n, r.tau, r.sup_error, r.bound_rhs,
                  r.eps_measured, tab.fitted_order);
    os << buf;
  }
}

/// Uniform error estimate for data with finite slope, checked at every
/// recorded sample of every row with the row's measured eps.
inline AuditReport bound_audit_regular(const RateTable& tab, double lambda, double eta) {
  const std::string tag = "regular-data-error";
  const double lam = std::min(lambda, 0.0);
  const auto& X = tab.system.X();
  const double S0 = metric_slope(tab.system.phi(), X, tab.u0);
  if (!std::isfinite(S0)) return AuditReport::not_applicable(tag, "initial datum has infinite slope");
  AuditReport rep(tag, 1e-12, 1e-9);
  std::string skipped;
  for (const auto& row : tab.rows) {
    if (4.0 * gamma_of(eta, lam) * row.tau > 1.0) {
      skipped += " n=" + std::to_string(row.n);
      continue;
    }
    for (const auto& s : row.samples)
      rep.add("n=" + std::to_string(row.n) + " t=" + std::to_string(s.t), s.error,
              regular_bound_rhs(s.t, row.tau, lam, eta, row.eps_measured, 0.0, S0));
  }
  if (!skipped.empty()) rep.set_note("rows with 4 gamma tau > 1 skipped:" + skipped);
  return rep.finalize();
}

/// Order-1/4 estimate for data in the domain only, with the Moreau-Yosida
/// term computed by the proximal solver.
inline AuditReport bound_audit_domain(const RateTable& tab, double lambda, double eta, const SolverConfig& solver = {}) {
  const std::string tag = "domain-data-error";
  const double lam = std::min(lambda, 0.0);
  const auto& X = tab.system.X();
  const auto& f = tab.system.phi();
  const double f0 = f.value(tab.u0);
  if (!std::isfinite(f0)) return AuditReport::not_applicable(tag, "initial datum outside the domain");
  std::map<double, double> cache;
  auto gap = [&](double sigma) {
    auto it = cache.find(sigma);
    if (it != cache.end()) return it->second;
    const double g = f0 - moreau_yosida_value(f, X, sigma, tab.u0, solver);
    cache.emplace(sigma, g);
    return g;
  };
  AuditReport rep(tag, 1e-12, 1e-9);
  std::string skipped;
  for (const auto& row : tab.rows) {
    if (!(row.tau < 1.0) || 4.0 * gamma_of(eta, lam) * row.tau > 1.0) {
      skipped += " n=" + std::to_string(row.n);
      continue;
    }
    for (const auto& s : row.samples)
      rep.add("n=" + std::to_string(row.n) + " t=" + std::to_string(s.t), s.error,
              domain_bound_rhs(s.t, row.tau, lam, eta, 0.0, gap));
  }
  if (!skipped.empty()) rep.set_note("rows violating tau < 1 or 4 gamma tau <= 1 skipped:" + skipped);
  return rep.finalize();
}

/// Single-step local error:
///   e^{2 lambda tau} d^2(U, u_tau) <= tau^2 (|d phi|^2(u0) - e^{2 alpha tau} |d phi|^2(U)) + 3 eps tau,
/// with lambda clipped to <= 0, beta = eta - lambda,
/// alpha = min(0, log(1 - (eta + beta - 2 lambda) tau)/(2 tau)), and eps the
/// smallest slack making the one-step hypotheses hold (or `eps_override`).
inline AuditReport local_error_check(const EnergySystem& sys, const ReferenceFlow& ref, const Point& u0, double tau,
                                     double eta, std::optional<double> eps_override = std::nullopt,
                                     const SolverConfig& solver = {}) {
  const std::string tag = "local-error";
  const auto& X = sys.X();
  const auto& f = sys.phi();
  const double S0 = metric_slope(f, X, u0);
  if (!std::isfinite(S0)) return AuditReport::not_applicable(tag, "u0 has infinite slope");
  const double lam = std::min(sys.lambda_hint, 0.0), beta = eta - lam;
  const double k = (eta + beta - 2.0 * lam) * tau;
  if (!(k < 1.0)) return AuditReport::not_applicable(tag, "requires (eta + beta - 2 lambda) tau < 1");
  const double alpha = std::min(0.0, std::log(1.0 - k) / (2.0 * tau));
  const auto r = solve_resolvent(f, X, tau, eta, u0, solver);
  const Point& U = r.point;
  const double d2 = X.dist2(U, u0), S = metric_slope(f, X, U);
  const double c = 1.0 - 0.5 * eta * tau;
  double eps = std::max({0.0, tau * c * c * S * S - d2 / tau, (1.0 - 0.5 * beta * tau) * d2 / tau - (f.value(u0) - f.value(U))});
  if (eps_override) eps = *eps_override;
  AuditReport rep(tag, 1e-14, 1e-9);
  const Point ut = ref.eval(tau, u0);
  rep.add("tau=" + std::to_string(tau), std::exp(2.0 * lam * tau) * X.dist2(U, ut),
          tau * tau * (S0 * S0 - std::exp(2.0 * alpha * tau) * S * S) + 3.0 * eps * tau);
  rep.set_note("eps=" + std::to_string(eps));
  return rep.finalize();
}

}  // namespace mmflow
