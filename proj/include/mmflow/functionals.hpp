#pragma once

// Energy functional catalog plus the slope estimators built on top of it.

#include "mmflow/core.hpp"
#include "mmflow/spaces.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <functional>
#include <random>

namespace mmflow {

/// phi(x) = 1/2 x^T A x - b^T x with A symmetric positive semidefinite.
class QuadraticFunctional final : public Functional {
 public:
  QuadraticFunctional(Eigen::MatrixXd A, Vector b) : A_(std::move(A)), b_(std::move(b)) {
    require(A_.rows() == A_.cols(), "quadratic: A must be square");
    require(A_.rows() == b_.size(), "quadratic: A and b sizes differ");
    require((A_ - A_.transpose()).norm() <= 1e-12 * (1.0 + A_.norm()), "quadratic: A must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A_);
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
    require(evals_.minCoeff() >= -1e-12, "quadratic: A must be positive semidefinite");
  }

  /// Scalar case phi(x) = a x^2/2 - b x.
  static std::shared_ptr<QuadraticFunctional> scalar(double a, double b = 0.0) {
    return std::make_shared<QuadraticFunctional>(Eigen::MatrixXd::Constant(1, 1, a), Vector::Constant(1, b));
  }

  std::string name() const override { return "quadratic"; }
  const Eigen::MatrixXd& A() const { return A_; }
  const Vector& b() const { return b_; }
  const Vector& eigenvalues() const { return evals_; }
  const Eigen::MatrixXd& eigenvectors() const { return evecs_; }

  double value(const Point& x) const override { return 0.5 * x.dot(A_ * x) - b_.dot(x); }
  std::optional<Vector> gradient(const Point& x) const override { return Vector(A_ * x - b_); }
  std::optional<SparseMatrix> hessian(const Point&) const override { return A_.sparseView(); }

  std::optional<Point> closed_form_prox(const MetricSpace& X, double tau, const Point& x) const override {
    const double w2 = X.scale() * X.scale();
    Eigen::MatrixXd M = w2 * Eigen::MatrixXd::Identity(A_.rows(), A_.cols()) + tau * A_;
    return Point(M.ldlt().solve(w2 * x + tau * b_));
  }

  double lambda_hint() const override { return std::max(0.0, evals_.minCoeff()); }

  std::optional<Point> minimizer(const MetricSpace&) const override {
    if (evals_.minCoeff() <= 1e-14) return std::nullopt;
    return Point(A_.ldlt().solve(b_));
  }

 private:
  Eigen::MatrixXd A_;
  Vector b_;
  Vector evals_;
  Eigen::MatrixXd evecs_;
};

/// phi(x) = w |x|_1.
class AbsNormFunctional final : public Functional {
 public:
  explicit AbsNormFunctional(double weight = 1.0) : w_(weight) { require(weight > 0.0, "abs: weight must be > 0"); }

  std::string name() const override { return "abs"; }
  double weight() const { return w_; }

  double value(const Point& x) const override { return w_ * x.lpNorm<1>(); }

  /// Minimal-norm subgradient has entries w sign(x_i) on the support and 0 off it.
  std::optional<double> analytic_slope(const MetricSpace& X, const Point& x) const override {
    const double nnz = static_cast<double>((x.array() != 0.0).count());
    return w_ * std::sqrt(nnz) / X.scale();
  }

  std::optional<Point> closed_form_prox(const MetricSpace& X, double tau, const Point& x) const override {
    const double thr = w_ * tau / (X.scale() * X.scale());
    Point y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double m = std::abs(x[i]) - thr;
      y[i] = m > 0.0 ? std::copysign(m, x[i]) : 0.0;
    }
    return y;
  }

  double lambda_hint() const override { return 0.0; }
  std::optional<Point> minimizer(const MetricSpace& X) const override {
    return Point::Zero(static_cast<Eigen::Index>(X.dimension()));
  }

 private:
  double w_;
};

/// phi(x) = -sqrt(x) on [0, inf), +inf for x < 0. One-dimensional.
class NegSqrtFunctional final : public Functional {
 public:
  std::string name() const override { return "neg-sqrt"; }

  double value(const Point& x) const override {
    require(x.size() == 1, "neg-sqrt: one-dimensional functional");
    return x[0] < 0.0 ? kInf : -std::sqrt(x[0]);
  }

  std::optional<Vector> gradient(const Point& x) const override {
    if (!(x[0] > 0.0)) return std::nullopt;
    return Vector::Constant(1, -0.5 / std::sqrt(x[0]));
  }

  std::optional<SparseMatrix> hessian(const Point& x) const override {
    if (!(x[0] > 0.0)) return std::nullopt;
    SparseMatrix H(1, 1);
    H.insert(0, 0) = 0.25 * std::pow(x[0], -1.5);
    return H;
  }

  std::optional<double> analytic_slope(const MetricSpace& X, const Point& x) const override {
    if (!(x[0] > 0.0)) return kInf;
    return 0.5 / std::sqrt(x[0]) / X.scale();
  }

  /// y = s^2 where s is the positive root of 2 s^3 - 2 x s - tau' = 0,
  /// tau' = tau / w^2, from the optimality condition (y - x) w^2 / tau = 1/(2 sqrt y).
  std::optional<Point> closed_form_prox(const MetricSpace& X, double tau, const Point& x) const override {
    const double t = tau / (X.scale() * X.scale());
    const double x0 = x[0];
    auto f = [&](double s) { return 2.0 * s * s * s - 2.0 * x0 * s - t; };
    double hi = 1.0;
    while (f(hi) <= 0.0) hi *= 2.0;
    // f is negative on [0, sqrt(x0/3)] and increasing beyond, so Newton from hi stays on the root's branch.
    const double lo = std::sqrt(std::max(x0, 0.0) / 3.0);
    auto fdf = [&](double s) { return std::make_pair(f(s), 6.0 * s * s - 2.0 * x0); };
    std::uintmax_t iters = 200;
    double guess = hi;
    double s = boost::math::tools::newton_raphson_iterate(fdf, guess, lo, hi, 52, iters);
    return Point::Constant(1, s * s);
  }

  double lambda_hint() const override { return 0.0; }
};

/// Negative entropy of the measure with quantile vector q,
/// phi(q) = -(1/M) sum_{i<M} log(M (q_{i+1} - q_i)).
class QuantileEntropy final : public Functional {
 public:
  std::string name() const override { return "entropy"; }

  double value(const Point& q) const override {
    const Eigen::Index M = q.size();
    const double Md = static_cast<double>(M);
    double s = 0.0;
    for (Eigen::Index i = 0; i + 1 < M; ++i) {
      const double d = q[i + 1] - q[i];
      if (!(d > 0.0)) return kInf;
      s += std::log(d * Md);
    }
    return -s / Md;
  }

  std::optional<Vector> gradient(const Point& q) const override {
    const Eigen::Index M = q.size();
    const double Md = static_cast<double>(M);
    Vector g = Vector::Zero(M);
    for (Eigen::Index i = 0; i + 1 < M; ++i) {
      const double d = q[i + 1] - q[i];
      if (!(d > 0.0)) return std::nullopt;
      g[i] += 1.0 / (Md * d);
      g[i + 1] -= 1.0 / (Md * d);
    }
    return g;
  }

  std::optional<SparseMatrix> hessian(const Point& q) const override {
    const Eigen::Index M = q.size();
    const double Md = static_cast<double>(M);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(4 * M));
    for (Eigen::Index i = 0; i + 1 < M; ++i) {
      const double d = q[i + 1] - q[i];
      if (!(d > 0.0)) return std::nullopt;
      const double c = 1.0 / (Md * d * d);
      trip.emplace_back(i, i, c);
      trip.emplace_back(i + 1, i + 1, c);
      trip.emplace_back(i, i + 1, -c);
      trip.emplace_back(i + 1, i, -c);
    }
    SparseMatrix H(M, M);
    H.setFromTriplets(trip.begin(), trip.end());
    return H;
  }

  double lambda_hint() const override { return 0.0; }
};

/// Potential energy (1/M) sum_i V(q_i) for a convex V with derivative oracles.
class QuantilePotential final : public Functional {
 public:
  using Scalar = std::function<double(double)>;

  QuantilePotential(std::string label, Scalar V, Scalar dV, Scalar d2V, double convexity)
      : label_(std::move(label)), V_(std::move(V)), dV_(std::move(dV)), d2V_(std::move(d2V)), kappa_(convexity) {}

  /// V(x) = kappa x^2 / 2.
  static std::shared_ptr<QuantilePotential> harmonic(double kappa) {
    require(kappa >= 0.0, "harmonic potential: kappa must be >= 0");
    return std::make_shared<QuantilePotential>(
        "harmonic", [kappa](double x) { return 0.5 * kappa * x * x; }, [kappa](double x) { return kappa * x; },
        [kappa](double) { return kappa; }, kappa);
  }

  std::string name() const override { return "potential:" + label_; }

  double value(const Point& q) const override {
    double s = 0.0;
    for (Eigen::Index i = 0; i < q.size(); ++i) s += V_(q[i]);
    return s / static_cast<double>(q.size());
  }

  std::optional<Vector> gradient(const Point& q) const override {
    Vector g(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) g[i] = dV_(q[i]) / static_cast<double>(q.size());
    return g;
  }

  std::optional<SparseMatrix> hessian(const Point& q) const override {
    SparseMatrix H(q.size(), q.size());
    H.reserve(Eigen::VectorXi::Constant(q.size(), 1));
    for (Eigen::Index i = 0; i < q.size(); ++i) H.insert(i, i) = d2V_(q[i]) / static_cast<double>(q.size());
    return H;
  }

  double lambda_hint() const override { return kappa_; }

 private:
  std::string label_;
  Scalar V_, dV_, d2V_;
  double kappa_;
};

/// Sum of functionals on the same space; lambda hints add.
class SumFunctional final : public Functional {
 public:
  explicit SumFunctional(std::vector<FunctionalHandle> parts) : parts_(std::move(parts)) {
    require(!parts_.empty(), "sum functional: no parts");
  }

  std::string name() const override {
    std::string n;
    for (const auto& p : parts_) n += (n.empty() ? "" : "+") + p->name();
    return n;
  }

  double value(const Point& x) const override {
    double s = 0.0;
    for (const auto& p : parts_) {
      const double v = p->value(x);
      if (!std::isfinite(v)) return kInf;
      s += v;
    }
    return s;
  }

  std::optional<Vector> gradient(const Point& x) const override {
    Vector g = Vector::Zero(x.size());
    for (const auto& p : parts_) {
      auto gp = p->gradient(x);
      if (!gp) return std::nullopt;
      g += *gp;
    }
    return g;
  }

  std::optional<SparseMatrix> hessian(const Point& x) const override {
    SparseMatrix H(x.size(), x.size());
    for (const auto& p : parts_) {
      auto hp = p->hessian(x);
      if (!hp) return std::nullopt;
      H += *hp;
    }
    return H;
  }

  double lambda_hint() const override {
    double l = 0.0;
    for (const auto& p : parts_) l += p->lambda_hint();
    return l;
  }

 private:
  std::vector<FunctionalHandle> parts_;
};

/// Entropy plus harmonic confinement: the Ornstein-Uhlenbeck energy.
inline std::shared_ptr<SumFunctional> fokker_planck_functional(double kappa) {
  return std::make_shared<SumFunctional>(
      std::vector<FunctionalHandle>{std::make_shared<QuantileEntropy>(), QuantilePotential::harmonic(kappa)});
}

/// A one-dimensional functional given by plain callables; used for ad-hoc
/// test instances such as concave or nonsmooth scalar energies.
class ScalarFunctional final : public Functional {
 public:
  using Fn = std::function<double(double)>;

  ScalarFunctional(std::string label, Fn f, Fn df = nullptr, Fn d2f = nullptr, double lambda = -kInf)
      : label_(std::move(label)), f_(std::move(f)), df_(std::move(df)), d2f_(std::move(d2f)), lambda_(lambda) {}

  std::string name() const override { return label_; }
  double value(const Point& x) const override {
    require(x.size() == 1, label_ + ": one-dimensional functional");
    return f_(x[0]);
  }
  std::optional<Vector> gradient(const Point& x) const override {
    if (!df_ || !std::isfinite(f_(x[0]))) return std::nullopt;
    return Vector::Constant(1, df_(x[0]));
  }
  std::optional<SparseMatrix> hessian(const Point& x) const override {
    if (!d2f_ || !std::isfinite(f_(x[0]))) return std::nullopt;
    SparseMatrix H(1, 1);
    H.insert(0, 0) = d2f_(x[0]);
    return H;
  }
  double lambda_hint() const override { return lambda_; }

 private:
  std::string label_;
  Fn f_, df_, d2f_;
  double lambda_;
};

namespace detail {

inline double descent_quotient(const MetricSpace& X, const Functional& f, double fx, const Point& x, const Point& y) {
  const double d = X.dist(x, y);
  if (!(d > 0.0)) return 0.0;
  const double fy = f.value(y);
  if (!std::isfinite(fy)) return 0.0;
  return positive_part(fx - fy) / d;
}

}  // namespace detail

/// Shrinking-ball estimate of the metric slope (a lower bound at each radius).
///
/// Probes x +- r e_i along every coordinate plus 16 seeded random directions
/// at three metric radii. Returns +inf when x is outside the domain or the
/// quotient keeps growing by more than 30% per halving.
inline double sampled_metric_slope(const Functional& f, const MetricSpace& X, const Point& x) {
  const double fx = f.value(x);
  if (!std::isfinite(fx)) return kInf;
  const Eigen::Index n = x.size();
  std::vector<Vector> dirs;
  for (Eigen::Index i = 0; i < n; ++i) dirs.push_back(Vector::Unit(n, i));
  std::mt19937_64 rng(0x5eed5107e);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 16; ++k) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
    if (v.norm() > 0.0) dirs.push_back(v / v.norm());
  }
  const double base = 1.0 + X.scale() * x.norm();
  const double radii[3] = {1e-2 * base, 5e-3 * base, 2.5e-3 * base};
  double q[3] = {0.0, 0.0, 0.0};
  for (int k = 0; k < 3; ++k) {
    const double step = radii[k] / X.scale();
    for (const auto& v : dirs) {
      q[k] = std::max(q[k], detail::descent_quotient(X, f, fx, x, x + step * v));
      q[k] = std::max(q[k], detail::descent_quotient(X, f, fx, x, x - step * v));
    }
  }
  if (q[0] > 0.0 && q[1] > 1.3 * q[0] && q[2] > 1.3 * q[1]) return kInf;
  return std::max({q[0], q[1], q[2]});
}

/// |d phi|(x): exact when the functional knows it, sampled otherwise.
inline double metric_slope(const Functional& f, const MetricSpace& X, const Point& x) {
  X.check_dim(x);
  if (!f.in_domain(x)) return kInf;
  if (auto s = f.analytic_slope(X, x)) return *s;
  return sampled_metric_slope(f, X, x);
}

/// Lower bound of the global lambda-slope from a finite probe set.
inline double global_slope(const Functional& f, const MetricSpace& X, double lambda, const Point& x,
                           const std::vector<Point>& probes) {
  require(!probes.empty(), "global_slope: probe set is empty");
  const double fx = f.value(x);
  if (!std::isfinite(fx)) return kInf;
  double best = 0.0;
  for (const auto& y : probes) {
    const double d = X.dist(x, y);
    if (!(d > 0.0)) continue;
    const double fy = f.value(y);
    if (!std::isfinite(fy)) continue;
    best = std::max(best, positive_part(fx - fy + 0.5 * lambda * d * d) / d);
  }
  return best;
}

/// Displacement-convexity test for an internal energy density F: the map
/// s -> e^s F(e^{-s}) must be nonincreasing and convex on the grid.
inline bool mccann_check(const std::function<double(double)>& F, const std::vector<double>& s_grid) {
  require(s_grid.size() >= 3, "mccann_check: need at least 3 grid points");
  for (std::size_t i = 1; i < s_grid.size(); ++i)
    require(s_grid[i] > s_grid[i - 1], "mccann_check: grid must be increasing");
  std::vector<double> g(s_grid.size());
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    g[i] = std::exp(s_grid[i]) * F(std::exp(-s_grid[i]));
    if (!std::isfinite(g[i])) throw Error("mccann_check: F evaluation failed");
  }
  constexpr double slack = 1e-10;
  for (std::size_t i = 1; i < g.size(); ++i)
    if (g[i] > g[i - 1] + slack) return false;
  for (std::size_t i = 1; i + 1 < g.size(); ++i) {
    const double h0 = s_grid[i] - s_grid[i - 1], h1 = s_grid[i + 1] - s_grid[i];
    const double chord = (h1 * g[i - 1] + h0 * g[i + 1]) / (h0 + h1);
    if (g[i] > chord + slack) return false;
  }
  return true;
}

}  // namespace mmflow
