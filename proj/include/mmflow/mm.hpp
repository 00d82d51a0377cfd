#pragma once

// Minimizing Movement driver with Ekeland relaxation, its piecewise-constant
// interpolant, and the discrete and refined continuous stability auditors.

#include "mmflow/audit.hpp"
#include "mmflow/core.hpp"
#include "mmflow/resolvent.hpp"
#include "mmflow/spaces.hpp"

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace mmflow {

/// Smallest multiple k tau with k tau >= t (up to a 1e-9 relative rounding guard).
inline double t_ceil(double t, double tau) {
  require(tau > 0.0, "t_ceil: tau must be > 0");
  require(t >= 0.0, "t_ceil: t must be >= 0");
  return std::ceil(t / tau - 1e-9) * tau;
}

/// Index n of the interval ((n-1) tau, n tau] containing t; 0 for t = 0.
inline std::size_t step_index(double t, double tau) {
  const double k = std::ceil(t / tau - 1e-9);
  return k <= 0.0 ? 0 : static_cast<std::size_t>(k);
}

inline double gamma_of(double eta, double lambda) { return 2.0 * eta - 3.0 * lambda; }

/// (1 + 4 beta tau) t_tau.
inline double t_tau_beta(double t, double tau, double beta) { return (1.0 + 4.0 * beta * tau) * t_ceil(t, tau); }

struct SchemeParams {
  double tau = 0.1;
  double eta = 0.0;
  std::optional<double> eps_target;  // imposed per-step slack for bound audits
  std::size_t N = 10;
  SolverConfig solver;
};

class SchemeAbort : public Error {
 public:
  SchemeAbort(std::size_t step, double worst, const std::string& why)
      : Error("minimizing movement aborted at step " + std::to_string(step) + ": " + why +
              " (worst violation " + std::to_string(worst) + ")"),
        step_(step),
        worst_(worst) {}
  std::size_t step() const { return step_; }
  double worst_violation() const { return worst_; }

 private:
  std::size_t step_;
  double worst_;
};

/// U^0, ..., U^N of one scheme run.
struct DiscreteTrajectory {
  SpaceHandle space;
  FunctionalHandle functional;
  double tau = 0.0;
  double eta = 0.0;
  double eps = 0.0;  // max measured per-step slack (see measured_eps)
  std::vector<Point> points;
  std::vector<ResolventResult> per_step;  // per_step[n-1] produced U^n

  std::size_t steps() const { return points.empty() ? 0 : points.size() - 1; }
  double horizon() const { return tau * static_cast<double>(steps()); }

  Trajectory as_trajectory() const {
    std::vector<double> ts(points.size());
    for (std::size_t n = 0; n < points.size(); ++n) ts[n] = tau * static_cast<double>(n);
    return Trajectory(space, ts, points, TrajectoryKind::PiecewiseConstant);
  }
};

struct EpsMeasurement {
  std::vector<double> per_step;
  double max = 0.0;
};

/// Smallest eps making both per-step estimates hold:
///   tau (1 - eta tau/2)^2 |d phi|^2(U^n) <= d^2/tau + eps,
///   (1 - (eta - lambda) tau/2) d^2/tau <= phi(U^{n-1}) - phi(U^n) + eps.
inline EpsMeasurement measured_eps(const DiscreteTrajectory& tr, double lambda) {
  EpsMeasurement m;
  const auto& X = *tr.space;
  const auto& f = *tr.functional;
  const double tau = tr.tau, eta = tr.eta;
  for (std::size_t n = 1; n < tr.points.size(); ++n) {
    const double d2 = X.dist2(tr.points[n], tr.points[n - 1]);
    const double S = metric_slope(f, X, tr.points[n]);
    const double drop = f.value(tr.points[n - 1]) - f.value(tr.points[n]);
    const double c = 1.0 - 0.5 * eta * tau;
    const double e1 = tau * c * c * S * S - d2 / tau;
    const double e2 = (1.0 - 0.5 * (eta - lambda) * tau) * d2 / tau - drop;
    const double e = std::max({0.0, e1, e2});
    m.per_step.push_back(e);
    m.max = std::max(m.max, e);
  }
  return m;
}

/// Runs U^n in J_{tau,eta}(U^{n-1}) for n = 1..N. Every step must pass both
/// acceptance conditions; the first failure aborts the run.
inline DiscreteTrajectory run_minimizing_movement(const EnergySystem& sys, const SchemeParams& p, const Point& u0) {
  require(p.tau > 0.0 && std::isfinite(p.tau), "run_minimizing_movement: tau must be > 0");
  require(p.eta >= 0.0, "run_minimizing_movement: eta must be >= 0");
  require(std::isfinite(sys.lambda_hint), "run_minimizing_movement: system needs a finite lambda");
  const double lam = std::min(sys.lambda_hint, 0.0);
  require(4.0 * gamma_of(p.eta, lam) * p.tau <= 1.0, "run_minimizing_movement: step guard 4 gamma tau <= 1 violated");
  sys.X().validate(u0);
  require(sys.phi().in_domain(u0), "run_minimizing_movement: u0 outside the domain of " + sys.phi().name());

  DiscreteTrajectory tr;
  tr.space = sys.space;
  tr.functional = sys.functional;
  tr.tau = p.tau;
  tr.eta = p.eta;
  tr.points.reserve(p.N + 1);
  tr.per_step.reserve(p.N);
  tr.points.push_back(u0);
  for (std::size_t n = 1; n <= p.N; ++n) {
    ResolventResult r;
    try {
      r = solve_resolvent(sys.phi(), sys.X(), p.tau, p.eta, tr.points.back(), p.solver);
    } catch (const SchemeAbort&) {
      throw;
    } catch (const Error& e) {
      throw SchemeAbort(n, kInf, e.what());
    }
    if (!r.accepted_90) throw SchemeAbort(n, r.worst_violation, "energy-descent condition failed");
    if (!r.accepted_90bis) throw SchemeAbort(n, r.worst_violation, "Ekeland inequality failed on a probe");
    tr.points.push_back(r.point);
    tr.per_step.push_back(std::move(r));
  }
  tr.eps = measured_eps(tr, lam).max;
  return tr;
}

/// Piecewise-constant interpolant: U^n on ((n-1) tau, n tau], U^0 at t = 0.
inline const Point& interpolant_eval(const DiscreteTrajectory& tr, double t) {
  require(t >= 0.0, "interpolant_eval: t must be >= 0");
  const std::size_t n = step_index(t, tr.tau);
  if (n >= tr.points.size()) throw Error("interpolant_eval: t beyond the computed horizon");
  return tr.points[n];
}

/// Per-step discrete stability: slope vs step length, energy drop, and the
/// two slope recursions with lambda' = eta(1 + tau lambda_+/2) - lambda.
inline AuditReport discrete_stability_report(const DiscreteTrajectory& tr, double lambda) {
  require(tr.functional->lambda_hint() >= lambda - 1e-12, "discrete_stability_report: lambda exceeds the functional's hint");
  AuditReport rep("discrete-stability", 1e-10, 1e-9);
  const auto& X = *tr.space;
  const auto& f = *tr.functional;
  const double tau = tr.tau, eta = tr.eta;
  const double lam_prime = eta == 0.0 ? -lambda : eta * (1.0 + 0.5 * tau * positive_part(lambda)) - lambda;
  std::vector<double> slopes(tr.points.size());
  for (std::size_t n = 0; n < tr.points.size(); ++n) slopes[n] = metric_slope(f, X, tr.points[n]);
  for (std::size_t n = 1; n < tr.points.size(); ++n) {
    const double d = X.dist(tr.points[n], tr.points[n - 1]);
    const double drop = f.value(tr.points[n - 1]) - f.value(tr.points[n]);
    const std::string at = "n=" + std::to_string(n);
    rep.add(at + " slope-vs-step", (1.0 - 0.5 * eta * tau) * slopes[n], d / tau);
    rep.add(at + " energy-drop", (1.0 + 0.5 * (lambda - eta) * tau) * d * d / tau, drop);
    if (std::isfinite(slopes[n - 1]))
      rep.add(at + " step-vs-previous-slope", (1.0 + (lambda - eta) * tau) * d / tau, slopes[n - 1]);
    if (std::isfinite(slopes[n - 1]) && 1.0 - lam_prime * tau > 0.0)
      rep.add(at + " slope-recursion", (1.0 - lam_prime * tau) * slopes[n], slopes[n - 1]);
  }
  return rep.finalize();
}

/// Sum of d^2/(2 tau) over all steps <= phi(U^0) - phi(U^N).
inline AuditReport telescoped_descent_check(const DiscreteTrajectory& tr) {
  AuditReport rep("telescoped-descent", 1e-10, 1e-12);
  double acc = 0.0;
  for (std::size_t n = 1; n < tr.points.size(); ++n) acc += tr.space->dist2(tr.points[n], tr.points[n - 1]) / (2.0 * tr.tau);
  rep.add("N=" + std::to_string(tr.steps()), acc, tr.functional->value(tr.points.front()) - tr.functional->value(tr.points.back()));
  return rep.finalize();
}

struct ContinuousStabilityOptions {
  std::vector<double> t_samples;  // positive times within the horizon
  std::vector<double> s_samples;  // positive restart offsets (multiples of tau)
  SolverConfig my_solver;         // inner solver for Moreau-Yosida values
};

/// Refined continuous stability: distance from the start, restart
/// consistency, and slope decay, with beta = eta - lambda and lambda <= 0.
inline AuditReport continuous_stability_report(const EnergySystem& sys, const DiscreteTrajectory& tr, double lambda,
                                               const ContinuousStabilityOptions& opt, const SolverConfig& scheme_solver = {}) {
  const std::string tag = "refined-stability";
  if (lambda > 0.0) return AuditReport::not_applicable(tag, "requires lambda <= 0");
  const double tau = tr.tau, eta = tr.eta, beta = eta - lambda;
  if (4.0 * beta * tau > 1.0) return AuditReport::not_applicable(tag, "requires 4 beta tau <= 1");
  const auto& X = sys.X();
  const auto& f = sys.phi();
  const Point& U0 = tr.points.front();
  const double f0 = f.value(U0);
  auto gap = [&](double sigma) { return f0 - moreau_yosida_value(f, X, sigma, U0, opt.my_solver); };

  AuditReport rep(tag, 1e-10, 1e-9);
  for (double t : opt.t_samples) {
    require(t > 0.0 && t <= tr.horizon() + 1e-12, "continuous_stability_report: t outside (0, horizon]");
    const double ttb = t_tau_beta(t, tau, beta);
    const double Eb = exp_primitive(-beta, ttb);
    const Point& Pt = interpolant_eval(tr, t);
    const std::string at = "t=" + std::to_string(t);
    rep.add(at + " distance-from-start", 0.5 * X.dist2(Pt, U0), std::exp(2.0 * beta * ttb) * Eb * gap(Eb));
    const double S = metric_slope(f, X, Pt);
    rep.add(at + " slope-decay", 0.5 * S * S,
            (1.0 + 2.0 * eta * tau) * std::exp(2.0 * beta * ttb) / exp_primitive(-beta, t_ceil(t, tau)) * gap(Eb));
    for (double s : opt.s_samples) {
      require(s > 0.0 && s <= tr.horizon() + 1e-12, "continuous_stability_report: s outside (0, horizon]");
      const double stb = t_tau_beta(s, tau, beta);
      const double Es = exp_primitive(-beta, stb);
      SchemeParams rp;
      rp.tau = tau;
      rp.eta = eta;
      rp.N = step_index(t, tau);
      rp.solver = scheme_solver;
      const auto restart = run_minimizing_movement(sys, rp, interpolant_eval(tr, s));
      const double lhs = 0.5 * X.dist2(interpolant_eval(restart, t), Pt);
      const double rhs = std::exp(2.0 * beta * (ttb + stb) + eta * ttb) * Es * gap(Es);
      rep.add(at + " s=" + std::to_string(s) + " restart-consistency", lhs, rhs);
    }
  }
  return rep.finalize();
}

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string join_point(const Point& x) {
  std::string s;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? "," : "") + fmt17(x[i]);
  return s;
}

}  // namespace detail

/// Tab-separated table: n, t, point (comma-joined), phi, slope, step distance.
inline void write_discrete_trajectory(std::ostream& os, const DiscreteTrajectory& tr) {
  const auto& X = *tr.space;
  const auto& f = *tr.functional;
  os << "# space=" << X.name() << " dim=" << X.dimension() << '\n';
  os << "# tau=" << detail::fmt17(tr.tau) << " eta=" << detail::fmt17(tr.eta) << " eps=" << detail::fmt17(tr.eps) << '\n';
  os << "# n\tt\tpoint\tphi\tslope\tstep_distance\n";
  for (std::size_t n = 0; n < tr.points.size(); ++n) {
    const double step = n == 0 ? 0.0 : X.dist(tr.points[n], tr.points[n - 1]);
    os << n << '\t' << detail::fmt17(tr.tau * static_cast<double>(n)) << '\t' << detail::join_point(tr.points[n]) << '\t'
       << detail::fmt17(f.value(tr.points[n])) << '\t' << detail::fmt17(metric_slope(f, X, tr.points[n])) << '\t'
       << detail::fmt17(step) << '\n';
  }
}

struct SerializedTrajectory {
  std::string space_kind;
  std::size_t dimension = 0;
  double tau = 0.0, eta = 0.0, eps = 0.0;
  std::vector<double> times;
  std::vector<Point> points;
};

inline SerializedTrajectory read_discrete_trajectory(std::istream& is) {
  SerializedTrajectory out;
  std::string line;
  auto value_of = [](const std::string& ln, const std::string& key) -> std::string {
    const auto pos = ln.find(key + "=");
    if (pos == std::string::npos) throw Error("trajectory file: missing " + key + " in header");
    const auto start = pos + key.size() + 1;
    return ln.substr(start, ln.find_first_of(" \t", start) - start);
  };
  bool have_space = false, have_tau = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("space=") != std::string::npos) {
        out.space_kind = value_of(line, "space");
        out.dimension = static_cast<std::size_t>(std::stoul(value_of(line, "dim")));
        have_space = true;
      } else if (line.find("tau=") != std::string::npos) {
        out.tau = std::stod(value_of(line, "tau"));
        out.eta = std::stod(value_of(line, "eta"));
        out.eps = std::stod(value_of(line, "eps"));
        have_tau = true;
      }
      continue;
    }
    std::istringstream row(line);
    std::string n, t, pt;
    if (!std::getline(row, n, '\t') || !std::getline(row, t, '\t') || !std::getline(row, pt, '\t'))
      throw Error("trajectory file: malformed row at line " + std::to_string(lineno));
    std::vector<double> vals;
    std::istringstream ps(pt);
    std::string tok;
    while (std::getline(ps, tok, ',')) vals.push_back(std::stod(tok));
    out.times.push_back(std::stod(t));
    out.points.push_back(Eigen::Map<Point>(vals.data(), static_cast<Eigen::Index>(vals.size())));
  }
  require(have_space && have_tau, "trajectory file: missing header lines");
  require(!out.points.empty(), "trajectory file: no rows");
  for (const auto& p : out.points)
    require(static_cast<std::size_t>(p.size()) == out.dimension, "trajectory file: row dimension differs from header");
  return out;
}

}  // namespace mmflow
