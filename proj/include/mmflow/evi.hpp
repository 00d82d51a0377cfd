#pragma once

// Auditors for the checkable properties of EVI solutions, applied to sampled
// trajectories: integral characterizations, contraction, a priori estimates,
// energy identities, slope monotonicity, long-time behaviour, the local
// characterization along geodesics, and stability under initial data.

#include "mmflow/audit.hpp"
#include "mmflow/core.hpp"
#include "mmflow/functionals.hpp"
#include "mmflow/resolvent.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <set>

namespace mmflow {

namespace detail {

/// Up to `count` evenly spread sample indices, always including both ends.
inline std::vector<std::size_t> spread_indices(std::size_t size, std::size_t count) {
  std::vector<std::size_t> idx;
  if (size == 0) return idx;
  if (count >= size || count < 2) {
    for (std::size_t i = 0; i < size; ++i) idx.push_back(i);
    return idx;
  }
  std::set<std::size_t> s;
  for (std::size_t k = 0; k < count; ++k) s.insert((k * (size - 1)) / (count - 1));
  return {s.begin(), s.end()};
}

inline std::string pair_label(double s, double t) { return "s=" + std::to_string(s) + " t=" + std::to_string(t); }

}  // namespace detail

struct EviOptions {
  std::size_t max_times = 24;  // sampled instants; pairs are all ordered pairs among them
  double abs_tol = 1e-8;
  double rel_tol = 1e-8;
};

/// Both integral forms of EVI on sampled pairs s < t:
///   e^{lambda(t-s)}/2 d^2(u_t,v) - 1/2 d^2(u_s,v) <= E_lambda(t-s)(phi(v) - phi(u_t)),
///   1/2 d^2(u_t,v) - 1/2 d^2(u_s,v) + int_s^t (phi(u_r) + lambda/2 d^2(u_r,v)) dr <= (t-s) phi(v).
/// The time integral uses the trapezoid rule on the trajectory samples and
/// its right side is widened by the trapezoid error bound from second differences.
inline AuditReport evi_integral_check(const Trajectory& traj, const Functional& f, double lambda,
                                      const std::vector<Point>& v_probes, const EviOptions& opt = {}) {
  require(traj.kind() == TrajectoryKind::ContinuousSamples, "evi_integral_check: needs continuous samples");
  require(!v_probes.empty(), "evi_integral_check: no probes");
  const auto& X = traj.space();
  AuditReport rep("evi-integral", opt.abs_tol, opt.rel_tol);
  const auto idx = detail::spread_indices(traj.size(), opt.max_times);
  const std::size_t n = traj.size();
  std::vector<double> phi(n);
  for (std::size_t k = 0; k < n; ++k) phi[k] = f.value(traj.point(k));
  for (std::size_t vi = 0; vi < v_probes.size(); ++vi) {
    const Point& v = v_probes[vi];
    const double fv = f.value(v);
    require(std::isfinite(fv), "evi_integral_check: probe outside the domain");
    std::vector<double> g(n), d2(n);
    for (std::size_t k = 0; k < n; ++k) {
      d2[k] = X.dist2(traj.point(k), v);
      g[k] = phi[k] + 0.5 * lambda * d2[k];
    }
    // Cumulative trapezoid integral and a running bound on |g''|.
    std::vector<double> cum(n, 0.0), curv(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) cum[k] = cum[k - 1] + 0.5 * (g[k] + g[k - 1]) * (traj.time(k) - traj.time(k - 1));
    for (std::size_t k = 1; k + 1 < n; ++k) {
      const double h0 = traj.time(k) - traj.time(k - 1), h1 = traj.time(k + 1) - traj.time(k);
      curv[k] = std::abs(2.0 * ((g[k + 1] - g[k]) / h1 - (g[k] - g[k - 1]) / h0) / (h0 + h1));
    }
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        const std::size_t i = idx[a], j = idx[b];
        const double s = traj.time(i), t = traj.time(j), dt = t - s;
        const std::string lab = "v#" + std::to_string(vi) + " " + detail::pair_label(s, t);
        rep.add(lab + " pointwise", 0.5 * std::exp(lambda * dt) * d2[j] - 0.5 * d2[i],
                exp_primitive(lambda, dt) * (fv - phi[j]));
        double qerr = 0.0, hmax = 0.0, cmax = 0.0;
        for (std::size_t k = i; k < j; ++k) hmax = std::max(hmax, traj.time(k + 1) - traj.time(k));
        for (std::size_t k = (i > 0 ? i - 1 : 0); k <= std::min(j + 1, n - 1); ++k) cmax = std::max(cmax, curv[k]);
        qerr = 2.0 * dt * hmax * hmax * cmax / 12.0;
        rep.add(lab + " integrated", 0.5 * d2[j] - 0.5 * d2[i] + (cum[j] - cum[i]), dt * fv + qerr);
      }
    }
  }
  return rep.finalize();
}

/// d(u1_t, u2_t) <= e^{-lambda(t-s)} d(u1_s, u2_s) + slack on sampled pairs.
inline AuditReport contraction_check(const Trajectory& a, const Trajectory& b, double lambda, double slack = 0.0,
                                     std::size_t max_times = 32) {
  require(a.size() == b.size(), "contraction_check: time grids differ");
  for (std::size_t i = 0; i < a.size(); ++i)
    require(std::abs(a.time(i) - b.time(i)) <= 1e-12 * (1.0 + a.time(i)), "contraction_check: time grids differ");
  const auto& X = a.space();
  AuditReport rep("contraction", 1e-10 + slack, 1e-9);
  const auto idx = detail::spread_indices(a.size(), max_times);
  for (std::size_t p = 0; p < idx.size(); ++p)
    for (std::size_t q = p + 1; q < idx.size(); ++q) {
      const std::size_t i = idx[p], j = idx[q];
      rep.add(detail::pair_label(a.time(i), a.time(j)), X.dist(a.point(j), b.point(j)),
              std::exp(-lambda * (a.time(j) - a.time(i))) * X.dist(a.point(i), b.point(i)));
    }
  return rep.finalize();
}

struct EstimateOptions {
  std::size_t max_times = 24;
  int quadrature_nodes = 32;  // 16 or 32 Gauss-Legendre nodes for the Moreau-Yosida remainder
  double abs_tol = 1e-9;
  double rel_tol = 1e-8;
  SolverConfig my_solver;
};

/// A priori estimates and short-time expansions at sampled t > 0, for a
/// trajectory whose first sample is u_0 at t = 0. Inequalities whose
/// hypotheses fail are skipped and listed in the note.
inline AuditReport estimate_suite(const Trajectory& traj, const Functional& f, double lambda, const Point& v,
                                  const EstimateOptions& opt = {}) {
  require(traj.time(0) == 0.0, "estimate_suite: first sample must be at t = 0");
  const auto& X = traj.space();
  const Point& u0 = traj.point(0);
  const double fv = f.value(v), f0 = f.value(u0);
  require(std::isfinite(fv), "estimate_suite: v outside the domain");
  const double d0v2 = X.dist2(u0, v);
  const double S0 = metric_slope(f, X, u0);
  const double Sv = metric_slope(f, X, v);
  AuditReport rep("a-priori-estimates", opt.abs_tol, opt.rel_tol);
  bool skipped_slope = false, skipped_reg = false, skipped_lessreg = !std::isfinite(f0);

  auto remainder = [&](double t) {
    auto integrand = [&](double s) {
      const double sigma = exp_primitive(lambda, s);
      if (!(sigma > 0.0)) return 0.0;
      return std::exp(2.0 * lambda * s) * (f0 - moreau_yosida_value(f, X, sigma, u0, opt.my_solver));
    };
    const double I = opt.quadrature_nodes <= 16 ? boost::math::quadrature::gauss<double, 16>::integrate(integrand, 0.0, t)
                                                : boost::math::quadrature::gauss<double, 32>::integrate(integrand, 0.0, t);
    return 2.0 * std::exp(-lambda * t) * I;
  };

  for (std::size_t k : detail::spread_indices(traj.size(), opt.max_times)) {
    const double t = traj.time(k);
    if (t <= 0.0) continue;
    const Point& ut = traj.point(k);
    const double d2 = X.dist2(ut, v), ft = f.value(ut), St = metric_slope(f, X, ut);
    const double E = exp_primitive(lambda, t);
    const std::string at = "t=" + std::to_string(t);
    rep.add(at + " energy-distance-slope", 0.5 * std::exp(lambda * t) * d2 + E * (ft - fv) + 0.5 * E * E * St * St,
            0.5 * d0v2);
    if (-lambda * t < std::log(2.0) && std::isfinite(Sv))
      rep.add(at + " slope-bound", St * St, Sv * Sv / (2.0 * std::exp(lambda * t) - 1.0) + d0v2 / (E * E));
    else
      skipped_slope = true;
    if (lambda <= 0.0 && std::isfinite(S0))
      rep.add(at + " short-time-expansion",
              0.5 * std::exp(2.0 * lambda * t) * d2 - 0.5 * d0v2,
              exp_primitive(2.0 * lambda, t) * (fv - f0) + 0.5 * t * t * S0 * S0);
    else
      skipped_reg = true;
    if (std::isfinite(f0))
      rep.add(at + " short-time-expansion-domain", 0.5 * std::exp(lambda * t) * d2 - 0.5 * d0v2,
              E * (fv - f0) + remainder(t));
  }
  std::string note;
  if (skipped_slope) note += "slope-bound not applicable (needs -lambda t < log 2 and finite slope at v); ";
  if (skipped_reg) note += "short-time-expansion not applicable (needs lambda <= 0 and finite initial slope); ";
  if (skipped_lessreg) note += "short-time-expansion-domain not applicable (u0 outside the domain); ";
  if (!note.empty()) rep.set_note(note.substr(0, note.size() - 2));
  return rep.finalize();
}

/// R(s,t) = int_s^t (|u'|^2/2 + |d phi|^2/2) + phi(u_t) - phi(u_s) over the whole trajectory.
inline double energy_residual(const Trajectory& traj, const Functional& f, std::size_t stride = 1) {
  require(stride >= 1, "energy_residual: stride must be >= 1");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < traj.size(); i += stride) idx.push_back(i);
  if (idx.back() != traj.size() - 1) throw Error("energy_residual: stride must divide the sample count minus one");
  std::vector<double> ts;
  std::vector<Point> ps;
  for (auto i : idx) {
    ts.push_back(traj.time(i));
    ps.push_back(traj.point(i));
  }
  Trajectory sub(traj.space_handle(), ts, ps);
  const auto& X = sub.space();
  double integral = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < sub.size(); ++k) {
    const double md = metric_derivative(sub, k);
    const double S = metric_slope(f, X, sub.point(k));
    const double g = 0.5 * md * md + 0.5 * S * S;
    if (k > 0) integral += 0.5 * (g + prev) * (sub.time(k) - sub.time(k - 1));
    prev = g;
  }
  return integral + f.value(sub.point(sub.size() - 1)) - f.value(sub.point(0));
}

struct EnergyAudit {
  double residual = 0.0;   // R over the full trajectory
  double tolerance = 0.0;
  AuditReport ede;         // |R| <= tol
  AuditReport edi;         // R <= tol
};

/// Energy-dissipation equality and inequality. Without an explicit tolerance
/// the quadrature error is estimated by comparing against the half-resolution
/// residual (Richardson): tol = 4 |R_h - R_2h| + 1e-12.
inline EnergyAudit ede_edi_residual(const Trajectory& traj, const Functional& f, std::optional<double> tol = std::nullopt) {
  require(traj.kind() == TrajectoryKind::ContinuousSamples, "ede_edi_residual: needs continuous samples");
  require(traj.size() >= 3, "ede_edi_residual: needs at least three samples");
  EnergyAudit out;
  out.residual = energy_residual(traj, f);
  if (tol) {
    out.tolerance = *tol;
  } else {
    double coarse = out.residual;
    if ((traj.size() - 1) % 2 == 0) coarse = energy_residual(traj, f, 2);
    out.tolerance = 4.0 * std::abs(out.residual - coarse) + 1e-12;
  }
  out.ede = AuditReport("energy-dissipation-equality", out.tolerance);
  out.ede.add_equal("R(s,t)", out.residual, 0.0);
  out.ede.finalize();
  out.edi = AuditReport("energy-dissipation-inequality", out.tolerance);
  out.edi.add("R(s,t)", out.residual, 0.0);
  out.edi.finalize();
  return out;
}

/// -d/dt phi(u_t), |u'_t|^2 and |d phi|^2(u_t) agree pairwise at interior samples with t >= t_min.
inline AuditReport energy_identity_check(const Trajectory& traj, const Functional& f, double t_min, double tol) {
  require(traj.size() >= 3, "energy_identity_check: needs at least three samples");
  const auto& X = traj.space();
  AuditReport rep("energy-identity", tol);
  for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
    const double t = traj.time(k);
    if (t < t_min) continue;
    const double dphi = -(f.value(traj.point(k + 1)) - f.value(traj.point(k - 1))) / (traj.time(k + 1) - traj.time(k - 1));
    const double md = metric_derivative(traj, k);
    const double S = metric_slope(f, X, traj.point(k));
    const std::string at = "t=" + std::to_string(t);
    rep.add_equal(at + " dissipation~speed^2", dphi, md * md);
    rep.add_equal(at + " dissipation~slope^2", dphi, S * S);
    rep.add_equal(at + " speed^2~slope^2", md * md, S * S);
  }
  return rep.finalize();
}

/// e^{lambda t} |d phi|(u_t) is nonincreasing along the samples.
inline AuditReport slope_monotonicity_check(const Trajectory& traj, const Functional& f, double lambda,
                                            double abs_tol = 1e-10) {
  const auto& X = traj.space();
  AuditReport rep("slope-monotonicity", abs_tol, 1e-10);
  double prev = kInf;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double cur = std::exp(lambda * traj.time(k)) * metric_slope(f, X, traj.point(k));
    if (k > 0 && std::isfinite(prev)) rep.add("t=" + std::to_string(traj.time(k)), cur, prev);
    prev = cur;
  }
  return rep.finalize();
}

/// Long-time behaviour towards the minimizer u_bar, measured from sample t0_index.
inline AuditReport asymptotic_behaviour_check(const Trajectory& traj, const Functional& f, double lambda,
                                              const Point& u_bar, std::size_t t0_index = 0, double abs_tol = 1e-10) {
  const std::string tag = "asymptotic-behaviour";
  if (lambda < 0.0) return AuditReport::not_applicable(tag, "requires lambda >= 0");
  require(t0_index < traj.size(), "asymptotic_behaviour_check: t0 index out of range");
  const auto& X = traj.space();
  const double fb = f.value(u_bar);
  require(std::isfinite(fb), "asymptotic_behaviour_check: u_bar outside the domain");
  AuditReport rep(tag, abs_tol, 1e-9);
  const double t0 = traj.time(t0_index);
  const Point& u0 = traj.point(t0_index);
  const double d0 = X.dist(u0, u_bar), gap0 = f.value(u0) - fb, S0 = metric_slope(f, X, u0);
  double prev_d = d0;
  for (std::size_t k = t0_index + 1; k < traj.size(); ++k) {
    const double t = traj.time(k), dt = t - t0;
    const Point& u = traj.point(k);
    const double d = X.dist(u, u_bar), gap = f.value(u) - fb, S = metric_slope(f, X, u);
    const std::string at = "t=" + std::to_string(t);
    if (lambda > 0.0) {
      rep.add(at + " distance-below-gap", 0.5 * lambda * d * d, gap);
      rep.add(at + " gap-below-slope", gap, S * S / (2.0 * lambda));
      rep.add(at + " distance-decay", d, d0 * std::exp(-lambda * dt));
      rep.add(at + " gap-decay", gap, gap0 * std::exp(-2.0 * lambda * dt));
      rep.add(at + " gap-by-distance", gap, d0 * d0 / (2.0 * exp_primitive(lambda, dt)));
      if (std::isfinite(S0)) rep.add(at + " slope-decay", S, S0 * std::exp(-lambda * dt));
      rep.add(at + " slope-by-distance", S, d0 / exp_primitive(lambda, dt));
    } else {
      rep.add(at + " slope-by-distance", S, d0 / dt);
      rep.add(at + " gap-by-distance", gap, d0 * d0 / (2.0 * dt));
      rep.add(at + " distance-nonincreasing", d, prev_d);
    }
    prev_d = d;
  }
  return rep.finalize();
}

struct LocalEviOptions {
  std::vector<double> s_grid{1.0, 0.5, 0.25, 0.125, 0.0625};  // geodesic parameters for the inner sup
  double s_min = 1e-4;                                          // directional derivative step
  double abs_tol = 1e-5;
  double rel_tol = 1e-5;
};

/// Local characterization along geodesics from u_{t0}:
///   sup_s (d/dt)^+ d^2(u_t, v_s)/(2s) at t0 <= limit of (phi(v_s) - phi(u_{t0}))/s as s -> 0.
/// The time derivative is a second-order one-sided difference on the next two
/// samples; the directional derivative is a Richardson-extrapolated quotient.
inline AuditReport local_evi_check(const Trajectory& traj, const Functional& f, const MetricSpace& X,
                                   std::size_t t0_index, const std::vector<Point>& v_endpoints,
                                   const LocalEviOptions& opt = {}) {
  require(t0_index + 2 < traj.size(), "local_evi_check: needs two samples after t0");
  const double h1 = traj.time(t0_index + 1) - traj.time(t0_index);
  const double h2 = traj.time(t0_index + 2) - traj.time(t0_index + 1);
  require(std::abs(h1 - h2) <= 1e-9 * h1, "local_evi_check: needs a uniform step after t0");
  const Point& u = traj.point(t0_index);
  const double fu = f.value(u);
  AuditReport rep("local-evi", opt.abs_tol, opt.rel_tol);
  for (std::size_t vi = 0; vi < v_endpoints.size(); ++vi) {
    const Point& v = v_endpoints[vi];
    const std::string lab = "v#" + std::to_string(vi);
    if (X.dist(u, v) == 0.0) {
      rep.add(lab + " degenerate", 0.0, 0.0);
      continue;
    }
    double lhs = -kInf;
    for (double s : opt.s_grid) {
      const Point vs = X.intermediate(u, v, s);
      const double g0 = X.dist2(traj.point(t0_index), vs), g1 = X.dist2(traj.point(t0_index + 1), vs),
                   g2 = X.dist2(traj.point(t0_index + 2), vs);
      const double deriv = (-3.0 * g0 + 4.0 * g1 - g2) / (2.0 * h1);
      lhs = std::max(lhs, deriv / (2.0 * s));
    }
    auto q = [&](double s) { return (f.value(X.intermediate(u, v, s)) - fu) / s; };
    const double rhs = 2.0 * q(0.5 * opt.s_min) - q(opt.s_min);
    rep.add(lab, lhs, rhs);
  }
  return rep.finalize();
}

struct StabilityOptions {
  std::vector<double> exceptional_times;  // slopes are not compared at these instants
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
};

/// Stability under converging initial data. `flows[k]` starts from u0^k with
/// d(u0^k, u0) decreasing in k; `limit` starts from u0. Checks the
/// contraction-rate bound on positions and that the sup gaps in position,
/// energy (t > 0) and slope are nonincreasing along the sequence.
inline AuditReport stability_experiment(const std::vector<Trajectory>& flows, const Trajectory& limit,
                                        const Functional& f, double lambda, const StabilityOptions& opt = {}) {
  require(!flows.empty(), "stability_experiment: no flows");
  const auto& X = limit.space();
  AuditReport rep("stability", opt.abs_tol, opt.rel_tol);
  double prev_pos = kInf, prev_val = kInf, prev_slope = kInf, prev_d0 = kInf;
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const auto& fl = flows[k];
    require(fl.size() == limit.size(), "stability_experiment: grids differ");
    const double d0 = X.dist(fl.point(0), limit.point(0));
    require(d0 <= prev_d0 + 1e-15, "stability_experiment: initial distances must be nonincreasing");
    prev_d0 = d0;
    double pos = 0.0, val = 0.0, slope = 0.0;
    for (std::size_t i = 0; i < limit.size(); ++i) {
      const double t = limit.time(i);
      require(std::abs(fl.time(i) - t) <= 1e-12 * (1.0 + t), "stability_experiment: grids differ");
      const double d = X.dist(fl.point(i), limit.point(i));
      rep.add("flow#" + std::to_string(k) + " t=" + std::to_string(t) + " contraction-rate", d,
              std::exp(-lambda * t) * d0);
      pos = std::max(pos, d);
      if (t > 0.0) {
        val = std::max(val, std::abs(f.value(fl.point(i)) - f.value(limit.point(i))));
        const bool excluded = std::any_of(opt.exceptional_times.begin(), opt.exceptional_times.end(),
                                          [&](double c) { return std::abs(c - t) <= 1e-12; });
        if (!excluded)
          slope = std::max(slope, std::abs(metric_slope(f, X, fl.point(i)) - metric_slope(f, X, limit.point(i))));
      }
    }
    const std::string lab = "flow#" + std::to_string(k);
    if (k > 0) {
      rep.add(lab + " position-gap-nonincreasing", pos, prev_pos);
      rep.add(lab + " energy-gap-nonincreasing", val, prev_val);
      rep.add(lab + " slope-gap-nonincreasing", slope, prev_slope);
    }
    prev_pos = pos;
    prev_val = val;
    prev_slope = slope;
  }
  return rep.finalize();
}

}  // namespace mmflow
