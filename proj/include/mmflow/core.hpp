#pragma once

// Shared scalar helpers, the metric-space and functional interfaces, and the
// sampled-trajectory type every auditor consumes.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmflow {

using Point = Eigen::VectorXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Error raised for violated preconditions (dimension mismatch, bad ranges, ...).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

/// (e^{λt} − 1)/λ, with the λ → 0 limit t. Switches to a series when |λt| is tiny.
inline double exp_primitive(double lambda, double t) {
  require(t >= 0.0, "exp_primitive: t must be nonnegative");
  const double x = lambda * t;
  if (std::abs(x) < 1e-8) return t * (1.0 + x / 2.0 + x * x / 6.0);
  return std::expm1(x) / lambda;
}

inline double positive_part(double x) { return x > 0.0 ? x : 0.0; }
inline double negative_part(double x) { return x < 0.0 ? -x : 0.0; }

/// A metric space whose distance is a scaled Euclidean norm in coordinates.
///
/// Both concrete spaces of the library are flat in their coordinates:
/// dist(x, y) = scale() * |x - y|_2 and geodesics are affine. The scale is
/// exposed so proximal solvers can work in plain coordinates.
class MetricSpace {
 public:
  virtual ~MetricSpace() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Ratio between the metric and the coordinate Euclidean norm.
  virtual double scale() const = 0;
  /// Throws Error when x is not a valid element of the space.
  virtual void validate(const Point& x) const = 0;
  /// Projects round-off violations of the space constraints back into it.
  virtual Point repair(const Point& x) const { return x; }

  double dist(const Point& x, const Point& y) const {
    check_dim(x);
    check_dim(y);
    return scale() * (x - y).norm();
  }

  double dist2(const Point& x, const Point& y) const {
    const double d = dist(x, y);
    return d * d;
  }

  /// Exact constant-speed geodesic point between x0 and x1.
  Point intermediate(const Point& x0, const Point& x1, double theta) const {
    check_dim(x0);
    check_dim(x1);
    require(theta >= 0.0 && theta <= 1.0, "intermediate_point: theta outside [0,1]");
    if (theta == 0.0) return x0;
    if (theta == 1.0) return x1;
    return (1.0 - theta) * x0 + theta * x1;
  }

  /// Dual norm of a coordinate gradient, i.e. the metric length of the
  /// corresponding Riesz gradient.
  double dual_norm(const Vector& grad) const { return grad.norm() / scale(); }

  void check_dim(const Point& x) const {
    if (static_cast<std::size_t>(x.size()) != dimension())
      throw Error(name() + ": dimension mismatch (got " + std::to_string(x.size()) +
                  ", expected " + std::to_string(dimension()) + ")");
  }
};

using SpaceHandle = std::shared_ptr<const MetricSpace>;

/// A proper, lower semicontinuous functional on a MetricSpace.
///
/// Only value() is mandatory. Catalog functionals override the optional
/// hooks with exact formulas; anything left unset falls back to sampling
/// estimators or the generic inner solver.
class Functional {
 public:
  virtual ~Functional() = default;

  virtual std::string name() const = 0;
  /// +inf outside the domain.
  virtual double value(const Point& x) const = 0;

  /// Coordinate gradient at interior domain points.
  virtual std::optional<Vector> gradient(const Point&) const { return std::nullopt; }
  /// Coordinate Hessian at interior domain points.
  virtual std::optional<SparseMatrix> hessian(const Point&) const { return std::nullopt; }

  /// Exact metric slope, when known. The default derives it from the gradient.
  virtual std::optional<double> analytic_slope(const MetricSpace& space, const Point& x) const {
    if (!std::isfinite(value(x))) return kInf;
    if (auto g = gradient(x)) return space.dual_norm(*g);
    return std::nullopt;
  }

  /// Exact minimizer of y -> d^2(x, y)/(2 tau) + value(y), when known.
  virtual std::optional<Point> closed_form_prox(const MetricSpace&, double /*tau*/,
                                                const Point&) const {
    return std::nullopt;
  }

  /// Convexity modulus along geodesics (may be -inf if unknown).
  virtual double lambda_hint() const { return -kInf; }

  /// Known global minimizer, if any.
  virtual std::optional<Point> minimizer(const MetricSpace&) const { return std::nullopt; }

  bool in_domain(const Point& x) const { return std::isfinite(value(x)); }
};

using FunctionalHandle = std::shared_ptr<const Functional>;

/// The metric-functional system together with its convexity modulus.
struct EnergySystem {
  SpaceHandle space;
  FunctionalHandle functional;
  double lambda_hint = 0.0;

  EnergySystem() = default;
  EnergySystem(SpaceHandle s, FunctionalHandle f)
      : space(std::move(s)), functional(std::move(f)), lambda_hint(functional->lambda_hint()) {}
  EnergySystem(SpaceHandle s, FunctionalHandle f, double lambda)
      : space(std::move(s)), functional(std::move(f)), lambda_hint(lambda) {}

  const MetricSpace& X() const { return *space; }
  const Functional& phi() const { return *functional; }
};

enum class TrajectoryKind { ContinuousSamples, PiecewiseConstant };

/// Time-stamped samples of a curve in one metric space.
class Trajectory {
 public:
  Trajectory(SpaceHandle space, std::vector<double> times, std::vector<Point> points,
             TrajectoryKind kind = TrajectoryKind::ContinuousSamples)
      : space_(std::move(space)), times_(std::move(times)), points_(std::move(points)), kind_(kind) {
    require(space_ != nullptr, "Trajectory: null space");
    require(!times_.empty(), "Trajectory: needs at least one sample");
    require(times_.size() == points_.size(), "Trajectory: times/points length mismatch");
    for (std::size_t i = 0; i < times_.size(); ++i) {
      require(std::isfinite(times_[i]) && times_[i] >= 0.0, "Trajectory: times must be >= 0");
      if (i > 0) require(times_[i] > times_[i - 1], "Trajectory: times must be strictly increasing");
      space_->check_dim(points_[i]);
    }
  }

  /// Samples t -> curve(t) on the given time grid.
  template <class Curve>
  static Trajectory sample(SpaceHandle space, const std::vector<double>& times, Curve&& curve) {
    std::vector<Point> pts;
    pts.reserve(times.size());
    for (double t : times) pts.push_back(curve(t));
    return Trajectory(std::move(space), times, std::move(pts));
  }

  const MetricSpace& space() const { return *space_; }
  const SpaceHandle& space_handle() const { return space_; }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Point>& points() const { return points_; }
  TrajectoryKind kind() const { return kind_; }
  std::size_t size() const { return times_.size(); }
  double time(std::size_t i) const { return times_.at(i); }
  const Point& point(std::size_t i) const { return points_.at(i); }

 private:
  SpaceHandle space_;
  std::vector<double> times_;
  std::vector<Point> points_;
  TrajectoryKind kind_;
};

/// Uniform grid t0, t0 + dt, ..., t1 (inclusive, up to rounding).
inline std::vector<double> uniform_times(double t0, double t1, std::size_t intervals) {
  require(intervals >= 1 && t1 > t0, "uniform_times: bad range");
  std::vector<double> ts(intervals + 1);
  for (std::size_t i = 0; i <= intervals; ++i)
    ts[i] = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(intervals);
  return ts;
}

/// Finite-difference estimate of the metric derivative |u'|(t_i).
///
/// Central difference at interior samples, one-sided at the two ends.
inline double metric_derivative(const Trajectory& traj, std::size_t index) {
  require(traj.kind() == TrajectoryKind::ContinuousSamples,
          "metric_derivative: needs continuous samples");
  require(traj.size() >= 2, "metric_derivative: needs at least two samples");
  require(index < traj.size(), "metric_derivative: index out of range");
  const auto& X = traj.space();
  std::size_t lo = index == 0 ? 0 : index - 1;
  std::size_t hi = index + 1 == traj.size() ? index : index + 1;
  return X.dist(traj.point(lo), traj.point(hi)) / (traj.time(hi) - traj.time(lo));
}

/// Chordal length: sum of distances between consecutive samples.
inline double curve_length(const Trajectory& traj) {
  require(traj.kind() == TrajectoryKind::ContinuousSamples,
          "curve_length: needs continuous samples");
  double len = 0.0;
  for (std::size_t i = 1; i < traj.size(); ++i) len += traj.space().dist(traj.point(i - 1), traj.point(i));
  return len;
}

}  // namespace mmflow
