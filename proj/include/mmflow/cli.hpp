#pragma once

// Scenario configuration (JSON) and the run / verify / rates / list commands.

#include "mmflow/audit.hpp"
#include "mmflow/core.hpp"
#include "mmflow/evi.hpp"
#include "mmflow/functionals.hpp"
#include "mmflow/geometry.hpp"
#include "mmflow/harness.hpp"
#include "mmflow/mm.hpp"
#include "mmflow/resolvent.hpp"
#include "mmflow/spaces.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace mmflow {

/// Raised for malformed or inconsistent scenario files; maps to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ScenarioConfig {
  std::string space_kind = "euclidean";
  std::size_t dimension = 1;  // Euclidean dimension or quantile grid size
  std::string functional_kind;
  nlohmann::json functional_params;
  std::optional<double> lambda;
  nlohmann::json u0_spec;
  std::optional<nlohmann::json> u1_spec;  // second datum for two-trajectory audits
  double horizon = 1.0;
  std::vector<std::size_t> n_list;
  double eta = 0.0;
  std::optional<double> eps_target;
  SolverConfig solver;
  std::vector<std::string> audits;
  std::uint64_t seed = 1;
  std::string rates_path = "rates.csv";
  std::string reports_path = "reports.txt";
  std::string trajectory_path;             // optional scheme output for the coarsest n
  std::string verify_trajectory;           // input for the verify command
  std::string verify_kind = "continuous";  // continuous | discrete
  std::filesystem::path base_dir;          // directory of the config file
};

/// Audits understood by `run` (scheme and reference-flow based) and `verify`.
inline const std::vector<std::pair<std::string, std::string>>& audit_catalog() {
  static const std::vector<std::pair<std::string, std::string>> c = {
      {"crandall-liggett", "error at the horizon <= horizon/sqrt(n) |d phi|(u0) (lambda = eta = 0 form)"},
      {"regular-data-error", "uniform order-1/2 error bound with measured eps"},
      {"domain-data-error", "uniform order-1/4 error bound with the Moreau-Yosida term"},
      {"order", "fitted convergence order >= 0.45"},
      {"discrete-stability", "per-step slope, energy-drop and slope recursions (coarsest n)"},
      {"telescoped-descent", "sum of d^2/(2 tau) <= phi(U0) - phi(UN) (coarsest n)"},
      {"refined-stability", "distance-from-start, restart-consistency, slope-decay (coarsest n)"},
      {"resolvent-slope-bound", "slope at the first resolvent point vs step length"},
      {"local-error", "single-step local error estimate at tau = horizon / n_min"},
      {"duality", "Moreau-Yosida duality with the squared slope at u0"},
      {"evi-integral", "pointwise and integrated EVI on the reference flow"},
      {"contraction", "lambda-contraction of reference flows from u0 and u1"},
      {"energy-dissipation", "energy-dissipation equality on the reference flow"},
      {"energy-identity", "dissipation, squared speed and squared slope agree"},
      {"slope-monotonicity", "e^{lambda t}|d phi|(u_t) nonincreasing"},
      {"a-priori-estimates", "a priori estimates and short-time expansions"},
      {"asymptotic-behaviour", "long-time decay towards the minimizer"},
      {"local-evi", "local characterization along geodesics"},
      {"lambda-convexity", "geodesic lambda-convexity between u0 and the flow at the horizon"},
      {"lower-bounds", "quadratic and linear lower bounds around u0 on seeded probes"},
  };
  return c;
}

inline const std::vector<std::pair<std::string, std::string>>& functional_catalog() {
  static const std::vector<std::pair<std::string, std::string>> c = {
      {"quadratic", "1/2 x^T A x - b^T x; params a (number or matrix), b (number or vector)"},
      {"abs", "weight * |x|_1; param weight"},
      {"neg-sqrt", "-sqrt(x) on [0, inf), one-dimensional"},
      {"entropy", "negative entropy in quantile coordinates (heat flow)"},
      {"fokker-planck", "entropy + kappa x^2/2 in quantile coordinates; param kappa"},
  };
  return c;
}

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T def, const std::string& where) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: field '" + where + "." + key + "' has the wrong type");
  }
}

inline const nlohmann::json& need(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError("config: missing field '" + where + key + "'");
  return j.at(key);
}

}  // namespace detail

inline ScenarioConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using detail::get_or;
  using detail::need;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  ScenarioConfig c;
  c.base_dir = base_dir;
  const auto& sp = need(j, "space", "");
  c.space_kind = get_or<std::string>(sp, "kind", "euclidean", "space");
  if (c.space_kind == "euclidean") {
    c.dimension = get_or<std::size_t>(sp, "dimension", 1, "space");
  } else if (c.space_kind == "quantile") {
    c.dimension = get_or<std::size_t>(sp, "grid", 256, "space");
  } else {
    throw ConfigError("config: unknown space.kind '" + c.space_kind + "'");
  }
  const auto& fn = need(j, "functional", "");
  c.functional_kind = get_or<std::string>(fn, "kind", "", "functional");
  bool known = false;
  for (const auto& [k, _] : functional_catalog()) known = known || k == c.functional_kind;
  if (!known) throw ConfigError("config: unknown functional.kind '" + c.functional_kind + "'");
  c.functional_params = fn;
  if (j.contains("lambda")) c.lambda = get_or<double>(j, "lambda", 0.0, "");
  c.u0_spec = need(j, "u0", "");
  if (j.contains("u1")) c.u1_spec = j.at("u1");
  c.horizon = get_or<double>(j, "horizon", 1.0, "");
  if (!(c.horizon > 0.0)) throw ConfigError("config: horizon must be > 0");
  c.n_list = get_or<std::vector<std::size_t>>(j, "n_list", {}, "");
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    if (c.n_list[i] == 0) throw ConfigError("config: n_list entries must be >= 1");
    if (i > 0 && c.n_list[i] <= c.n_list[i - 1]) throw ConfigError("config: n_list must be increasing");
  }
  c.eta = get_or<double>(j, "eta", 0.0, "");
  if (c.eta < 0.0) throw ConfigError("config: eta must be >= 0");
  if (j.contains("eps_target")) c.eps_target = get_or<double>(j, "eps_target", 0.0, "");
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    c.solver.tol = get_or<double>(s, "tol", c.solver.tol, "solver");
    c.solver.max_iter = get_or<int>(s, "max_iter", c.solver.max_iter, "solver");
    c.solver.probe_count = get_or<int>(s, "probe_count", c.solver.probe_count, "solver");
    c.solver.force_inner = get_or<bool>(s, "force_inner", c.solver.force_inner, "solver");
    const auto m = get_or<std::string>(s, "method", "newton", "solver");
    if (m == "newton") c.solver.method = InnerMethod::Newton;
    else if (m == "gradient") c.solver.method = InnerMethod::Gradient;
    else throw ConfigError("config: unknown solver.method '" + m + "'");
  }
  c.audits = get_or<std::vector<std::string>>(j, "audits", {}, "");
  for (const auto& a : c.audits) {
    bool ok = false;
    for (const auto& [k, _] : audit_catalog()) ok = ok || k == a;
    if (!ok) throw ConfigError("config: unknown audit '" + a + "'");
  }
  c.seed = get_or<std::uint64_t>(j, "seed", 1, "");
  if (j.contains("output")) {
    const auto& o = j.at("output");
    c.rates_path = get_or<std::string>(o, "rates", c.rates_path, "output");
    c.reports_path = get_or<std::string>(o, "reports", c.reports_path, "output");
    c.trajectory_path = get_or<std::string>(o, "trajectory", "", "output");
  }
  if (j.contains("verify")) {
    const auto& v = j.at("verify");
    c.verify_trajectory = get_or<std::string>(v, "trajectory", "", "verify");
    c.verify_kind = get_or<std::string>(v, "kind", "continuous", "verify");
    if (c.verify_kind != "continuous" && c.verify_kind != "discrete")
      throw ConfigError("config: verify.kind must be 'continuous' or 'discrete'");
  }
  return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

struct Scenario {
  ScenarioConfig cfg;
  EnergySystem system;
  double lambda = 0.0;
  double ou_kappa = 0.0;
};

namespace detail {

inline Eigen::MatrixXd json_matrix(const nlohmann::json& a, std::size_t d) {
  if (a.is_number()) return a.get<double>() * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  auto rows = a.get<std::vector<std::vector<double>>>();
  if (rows.size() != d) throw ConfigError("config: functional.a must be " + std::to_string(d) + "x" + std::to_string(d));
  Eigen::MatrixXd A(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) {
    if (rows[i].size() != d) throw ConfigError("config: functional.a must be square");
    for (std::size_t k = 0; k < d; ++k) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
  }
  return A;
}

inline Vector json_vector(const nlohmann::json& b, std::size_t d, const std::string& field) {
  if (b.is_number()) return Vector::Constant(static_cast<Eigen::Index>(d), b.get<double>());
  auto v = b.get<std::vector<double>>();
  if (v.size() != d) throw ConfigError("config: " + field + " must have length " + std::to_string(d));
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(d));
}

}  // namespace detail

inline Scenario build_scenario(const ScenarioConfig& cfg) {
  Scenario sc;
  sc.cfg = cfg;
  SpaceHandle X;
  if (cfg.space_kind == "euclidean") X = std::make_shared<EuclideanSpace>(cfg.dimension);
  else X = std::make_shared<QuantileSpace>(cfg.dimension);
  const auto& p = cfg.functional_params;
  FunctionalHandle f;
  try {
    if (cfg.functional_kind == "quadratic") {
      if (cfg.space_kind != "euclidean") throw ConfigError("config: quadratic functional needs a euclidean space");
      f = std::make_shared<QuadraticFunctional>(detail::json_matrix(p.value("a", nlohmann::json(1.0)), cfg.dimension),
                                                detail::json_vector(p.value("b", nlohmann::json(0.0)), cfg.dimension, "functional.b"));
    } else if (cfg.functional_kind == "abs") {
      f = std::make_shared<AbsNormFunctional>(p.value("weight", 1.0));
    } else if (cfg.functional_kind == "neg-sqrt") {
      if (cfg.space_kind != "euclidean" || cfg.dimension != 1) throw ConfigError("config: neg-sqrt needs euclidean dimension 1");
      f = std::make_shared<NegSqrtFunctional>();
    } else if (cfg.functional_kind == "entropy") {
      if (cfg.space_kind != "quantile") throw ConfigError("config: entropy needs a quantile space");
      f = std::make_shared<QuantileEntropy>();
    } else if (cfg.functional_kind == "fokker-planck") {
      if (cfg.space_kind != "quantile") throw ConfigError("config: fokker-planck needs a quantile space");
      sc.ou_kappa = p.value("kappa", 1.0);
      if (!(sc.ou_kappa > 0.0)) throw ConfigError("config: functional.kappa must be > 0");
      f = fokker_planck_functional(sc.ou_kappa);
    }
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: functional parameters have the wrong type");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("config: functional: ") + e.what());
  }
  sc.lambda = cfg.lambda.value_or(f->lambda_hint());
  sc.system = EnergySystem(X, f, sc.lambda);
  return sc;
}

inline Point build_point(const Scenario& sc, const nlohmann::json& spec, const std::string& field) {
  const auto& X = sc.system.X();
  Point x;
  try {
    if (spec.is_object() && spec.contains("gaussian")) {
      if (sc.cfg.space_kind != "quantile") throw ConfigError("config: " + field + ".gaussian needs a quantile space");
      const auto& g = spec.at("gaussian");
      x = gaussian_quantile(g.value("mean", 0.0), g.value("variance", 1.0), X.dimension());
    } else if (spec.is_object() && spec.contains("file")) {
      std::ifstream in(sc.cfg.base_dir / spec.at("file").get<std::string>());
      if (!in) throw ConfigError("config: cannot open " + field + ".file");
      x = read_quantile_point(in);
    } else if (spec.is_object() && spec.contains("point")) {
      x = detail::json_vector(spec.at("point"), X.dimension(), field + ".point");
    } else if (spec.is_number() || spec.is_array()) {
      x = detail::json_vector(spec, X.dimension(), field);
    } else {
      throw ConfigError("config: " + field + " must be a point, {\"point\":...}, {\"gaussian\":...} or {\"file\":...}");
    }
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: " + field + " has the wrong type");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("config: " + field + ": " + e.what());
  }
  try {
    X.validate(x);
  } catch (const Error& e) {
    throw ConfigError("config: " + field + ": " + e.what());
  }
  return x;
}

struct CommandOptions {
  std::string command;  // run | verify | rates | list
  std::filesystem::path config;
  std::filesystem::path out_dir = ".";
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
};

namespace detail {

inline Trajectory sample_reference(const Scenario& sc, const ReferenceFlow& rf, const Point& u0, std::size_t intervals) {
  const auto ts = uniform_times(0.0, sc.cfg.horizon, intervals);
  return Trajectory::sample(sc.system.space, ts, [&](double t) { return t == 0.0 ? u0 : rf.eval(t, u0); });
}

inline std::vector<Point> evi_probes(const Scenario& sc, const Trajectory& tr) {
  std::vector<Point> v;
  if (auto m = sc.system.phi().minimizer(sc.system.X())) v.push_back(*m);
  v.push_back(tr.point(0));
  v.push_back(tr.point(tr.size() - 1));
  return v;
}

/// Audits evaluated on a continuous trajectory (reference flow or file).
inline std::optional<AuditReport> continuous_audit(const std::string& name, const Scenario& sc, const Trajectory& tr) {
  const auto& f = sc.system.phi();
  const auto& X = sc.system.X();
  const double lam = sc.lambda;
  if (name == "evi-integral") return evi_integral_check(tr, f, lam, evi_probes(sc, tr));
  if (name == "energy-dissipation") return ede_edi_residual(tr, f).ede;
  if (name == "energy-identity") {
    const double dt = tr.time(1) - tr.time(0);
    return energy_identity_check(tr, f, 0.1 * tr.time(tr.size() - 1), 10.0 * dt);
  }
  if (name == "slope-monotonicity") return slope_monotonicity_check(tr, f, lam);
  if (name == "a-priori-estimates") {
    auto probes = evi_probes(sc, tr);
    return estimate_suite(tr, f, lam, probes.front());
  }
  if (name == "asymptotic-behaviour") {
    auto m = f.minimizer(X);
    if (!m) return AuditReport::not_applicable(name, "functional has no known minimizer");
    return asymptotic_behaviour_check(tr, f, lam, *m);
  }
  if (name == "local-evi") {
    const std::size_t i0 = tr.size() / 2;
    if (i0 + 2 >= tr.size()) return AuditReport::not_applicable(name, "too few samples");
    return local_evi_check(tr, f, X, i0, evi_probes(sc, tr));
  }
  return std::nullopt;
}

}  // namespace detail

struct RunOutcome {
  std::vector<AuditReport> reports;
  std::optional<RateTable> rates;
  std::optional<DiscreteTrajectory> coarse;  // scheme run at the smallest n, if one was needed
};

inline RunOutcome execute_run(const Scenario& sc, bool rates_only, unsigned jobs) {
  const auto& cfg = sc.cfg;
  const auto& f = sc.system.phi();
  const auto& X = sc.system.X();
  const Point u0 = build_point(sc, cfg.u0_spec, "u0");
  if (!f.in_domain(u0)) throw ConfigError("config: u0 lies outside the domain of " + f.name());
  RunOutcome out;
  std::set<std::string> wanted(cfg.audits.begin(), cfg.audits.end());
  const bool need_table = rates_only || wanted.count("crandall-liggett") || wanted.count("regular-data-error") ||
                          wanted.count("domain-data-error") || wanted.count("order");
  if (need_table) {
    if (cfg.n_list.empty()) throw ConfigError("config: n_list is required for convergence studies");
    StudyOptions so;
    so.eta = cfg.eta;
    so.solver = cfg.solver;
    so.eps_target = cfg.eps_target;
    so.jobs = jobs;
    so.ou_kappa = sc.ou_kappa;
    out.rates = convergence_study(sc.system, u0, cfg.horizon, cfg.n_list, so);
  }
  if (rates_only) return out;

  SchemeParams sp;
  if (!cfg.n_list.empty()) {
    sp.N = cfg.n_list.front();
    sp.tau = cfg.horizon / static_cast<double>(sp.N);
  }
  sp.eta = cfg.eta;
  sp.solver = cfg.solver;
  std::optional<DiscreteTrajectory> coarse;
  auto coarse_run = [&]() -> const DiscreteTrajectory& {
    if (cfg.n_list.empty()) throw ConfigError("config: n_list is required for scheme audits");
    if (!coarse) coarse = run_minimizing_movement(sc.system, sp, u0);
    return *coarse;
  };
  std::optional<ReferenceFlow> rf;
  std::optional<Trajectory> ref_traj;
  auto reference = [&]() -> const Trajectory& {
    if (!ref_traj) {
      rf = reference_flow(sc.system, sc.ou_kappa);
      ref_traj = detail::sample_reference(sc, *rf, u0, 1000);
    }
    return *ref_traj;
  };

  for (const auto& name : cfg.audits) {
    if (name == "crandall-liggett") {
      AuditReport rep(name, 1e-12, 1e-9);
      const double S0 = metric_slope(f, X, u0);
      for (const auto& row : out.rates->rows) {
        const auto& last = row.samples.back();
        rep.add("n=" + std::to_string(row.n), last.error, last.t / std::sqrt(static_cast<double>(row.n)) * S0);
      }
      out.reports.push_back(rep.finalize());
    } else if (name == "regular-data-error") {
      out.reports.push_back(bound_audit_regular(*out.rates, sc.lambda, cfg.eta));
    } else if (name == "domain-data-error") {
      out.reports.push_back(bound_audit_domain(*out.rates, sc.lambda, cfg.eta, cfg.solver));
    } else if (name == "order") {
      AuditReport rep(name, 0.0);
      rep.add("fitted_order", 0.45, out.rates->fitted_order);
      out.reports.push_back(rep.finalize());
    } else if (name == "discrete-stability") {
      out.reports.push_back(discrete_stability_report(coarse_run(), std::min(sc.lambda, f.lambda_hint())));
    } else if (name == "telescoped-descent") {
      out.reports.push_back(telescoped_descent_check(coarse_run()));
    } else if (name == "refined-stability") {
      const auto& tr = coarse_run();
      ContinuousStabilityOptions o;
      const double H = tr.horizon();
      o.t_samples = {t_ceil(0.25 * H, tr.tau), t_ceil(0.5 * H, tr.tau), H};
      o.s_samples = {tr.tau, t_ceil(0.25 * H, tr.tau)};
      o.my_solver = cfg.solver;
      out.reports.push_back(continuous_stability_report(sc.system, tr, std::min(sc.lambda, 0.0), o, cfg.solver));
    } else if (name == "resolvent-slope-bound") {
      const auto& tr = coarse_run();
      out.reports.push_back(slope_bound_check(f, X, tr.tau, tr.eta, tr.points[0], tr.per_step.at(0)));
    } else if (name == "local-error") {
      if (!rf) reference();
      out.reports.push_back(local_error_check(sc.system, *rf, u0, sp.tau, cfg.eta, std::nullopt, cfg.solver));
    } else if (name == "duality") {
      out.reports.push_back(duality_slope_check(f, X, sc.lambda, u0, {1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4}));
    } else if (name == "contraction") {
      if (!cfg.u1_spec) throw ConfigError("config: audit 'contraction' needs u1");
      const Point u1 = build_point(sc, *cfg.u1_spec, "u1");
      const auto& a = reference();
      const auto b = detail::sample_reference(sc, *rf, u1, 1000);
      out.reports.push_back(contraction_check(a, b, sc.lambda));
    } else if (name == "lambda-convexity") {
      const auto& a = reference();
      out.reports.push_back(lambda_convexity_check(f, X, u0, a.point(a.size() - 1), {0.1, 0.25, 0.5, 0.75, 0.9}, sc.lambda));
    } else if (name == "lower-bounds") {
      const double kappa = std::max(0.0, -sc.lambda) + 1.0;
      out.reports.push_back(lower_bound_constants(f, X, u0, sc.lambda, kappa, unit_ball_probes(X, u0, cfg.seed)).report);
    } else if (auto rep = detail::continuous_audit(name, sc, reference())) {
      out.reports.push_back(*rep);
    } else {
      throw ConfigError("config: audit '" + name + "' is not available for run");
    }
  }
  if (!cfg.trajectory_path.empty() && !cfg.n_list.empty()) coarse_run();
  out.coarse = std::move(coarse);
  return out;
}

inline std::vector<AuditReport> execute_verify(const Scenario& sc) {
  const auto& cfg = sc.cfg;
  if (cfg.verify_trajectory.empty()) throw ConfigError("config: verify.trajectory is required for verify");
  std::ifstream in(cfg.base_dir / cfg.verify_trajectory);
  if (!in) throw ConfigError("config: cannot open verify.trajectory");
  SerializedTrajectory st;
  try {
    st = read_discrete_trajectory(in);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (st.space_kind != sc.system.X().name() || st.dimension != sc.system.X().dimension())
    throw ConfigError("config: trajectory space does not match the scenario space");
  std::vector<AuditReport> reps;
  if (cfg.verify_kind == "discrete") {
    DiscreteTrajectory tr;
    tr.space = sc.system.space;
    tr.functional = sc.system.functional;
    tr.tau = st.tau;
    tr.eta = st.eta;
    tr.eps = st.eps;
    tr.points = st.points;
    for (const auto& name : cfg.audits) {
      if (name == "discrete-stability") reps.push_back(discrete_stability_report(tr, std::min(sc.lambda, sc.system.phi().lambda_hint())));
      else if (name == "telescoped-descent") reps.push_back(telescoped_descent_check(tr));
      else throw ConfigError("config: audit '" + name + "' is not available for discrete verify");
    }
    return reps;
  }
  Trajectory tr(sc.system.space, st.times, st.points);
  for (const auto& name : cfg.audits) {
    if (auto rep = detail::continuous_audit(name, sc, tr)) reps.push_back(*rep);
    else throw ConfigError("config: audit '" + name + "' is not available for continuous verify");
  }
  return reps;
}

/// Writes a continuous trajectory in the same tabular format (eta = eps = 0,
/// tau = first time step).
inline void write_sampled_trajectory(std::ostream& os, const Trajectory& tr, const Functional& f) {
  const auto& X = tr.space();
  os << "# space=" << X.name() << " dim=" << X.dimension() << '\n';
  os << "# tau=" << detail::fmt17(tr.size() > 1 ? tr.time(1) - tr.time(0) : 0.0) << " eta=0 eps=0\n";
  os << "# n\tt\tpoint\tphi\tslope\tstep_distance\n";
  for (std::size_t n = 0; n < tr.size(); ++n) {
    const double step = n == 0 ? 0.0 : X.dist(tr.point(n), tr.point(n - 1));
    os << n << '\t' << detail::fmt17(tr.time(n)) << '\t' << detail::join_point(tr.point(n)) << '\t'
       << detail::fmt17(f.value(tr.point(n))) << '\t' << detail::fmt17(metric_slope(f, X, tr.point(n))) << '\t'
       << detail::fmt17(step) << '\n';
  }
}

/// Entry point shared by the executable and the tests. Returns the exit code:
/// 0 all audits pass, 2 some audit fails, 1 usage or configuration error.
inline int run_command(const CommandOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    if (opt.command == "list") {
      out << "spaces:\n  euclidean  R^d, params: dimension\n  quantile   1D Wasserstein via quantiles, params: grid\n";
      out << "functionals:\n";
      for (const auto& [k, d] : functional_catalog()) out << "  " << k << "  " << d << '\n';
      out << "audits:\n";
      for (const auto& [k, d] : audit_catalog()) out << "  " << k << "  " << d << '\n';
      return 0;
    }
    if (opt.command != "run" && opt.command != "verify" && opt.command != "rates")
      throw ConfigError("usage: unknown command '" + opt.command + "'");
    if (opt.config.empty()) throw ConfigError("usage: --config <path> is required");
    ScenarioConfig cfg = load_config(opt.config);
    if (opt.seed) cfg.seed = *opt.seed;
    const Scenario sc = build_scenario(cfg);
    std::filesystem::create_directories(opt.out_dir);

    std::vector<AuditReport> reports;
    std::optional<RateTable> rates;
    if (opt.command == "verify") {
      reports = execute_verify(sc);
    } else {
      auto res = execute_run(sc, opt.command == "rates", opt.jobs);
      reports = std::move(res.reports);
      rates = std::move(res.rates);
      if (res.coarse && !cfg.trajectory_path.empty()) {
        std::ofstream tf(opt.out_dir / cfg.trajectory_path);
        if (!tf) throw ConfigError("cannot write " + (opt.out_dir / cfg.trajectory_path).string());
        write_discrete_trajectory(tf, *res.coarse);
      }
    }
    if (rates) {
      std::ofstream cf(opt.out_dir / cfg.rates_path);
      if (!cf) throw ConfigError("cannot write " + (opt.out_dir / cfg.rates_path).string());
      write_rate_table(cf, *rates);
    }
    bool all_pass = true;
    if (!reports.empty()) {
      std::ofstream rf(opt.out_dir / cfg.reports_path);
      if (!rf) throw ConfigError("cannot write " + (opt.out_dir / cfg.reports_path).string());
      for (const auto& r : reports) {
        write_report(rf, r, true);
        all_pass = all_pass && r.pass();
        out << (r.pass() ? "PASS " : "FAIL ") << r.tag() << " (max residual " << r.max_residual() << ", tolerance "
            << r.tolerance() << ", samples " << r.samples().size() << ")" << '\n';
      }
    }
    return all_pass ? 0 : 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mmflow
