#pragma once

// Euclidean R^d and the 1D Wasserstein space via quantile vectors.

#include "mmflow/core.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace mmflow {

class EuclideanSpace final : public MetricSpace {
 public:
  explicit EuclideanSpace(std::size_t d) : d_(d) { require(d >= 1, "EuclideanSpace: dimension must be >= 1"); }

  std::string name() const override { return "euclidean"; }
  std::size_t dimension() const override { return d_; }
  double scale() const override { return 1.0; }

  void validate(const Point& x) const override {
    check_dim(x);
    require(x.allFinite(), "euclidean: non-finite coordinate");
  }

 private:
  std::size_t d_;
};

/// Pool-adjacent-violators projection onto nondecreasing vectors (least squares).
inline Point isotonic_projection(const Point& x) {
  const Eigen::Index n = x.size();
  std::vector<double> sum;
  std::vector<Eigen::Index> count;
  sum.reserve(static_cast<std::size_t>(n));
  count.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    sum.push_back(x[i]);
    count.push_back(1);
    while (sum.size() > 1) {
      const std::size_t k = sum.size() - 1;
      if (sum[k - 1] / count[k - 1] <= sum[k] / count[k]) break;
      sum[k - 1] += sum[k];
      count[k - 1] += count[k];
      sum.pop_back();
      count.pop_back();
    }
  }
  Point out(n);
  Eigen::Index pos = 0;
  for (std::size_t b = 0; b < sum.size(); ++b) {
    const double v = sum[b] / static_cast<double>(count[b]);
    for (Eigen::Index j = 0; j < count[b]; ++j) out[pos++] = v;
  }
  return out;
}

/// Probability measures on R with finite second moment, stored as quantile
/// values q_i = F^{-1}(s_i) at the midpoint nodes s_i = (i - 1/2)/M.
///
/// dist is the discrete L^2(0,1) norm of the quantile difference, so the
/// coordinate scale is 1/sqrt(M).
class QuantileSpace final : public MetricSpace {
 public:
  static constexpr double kMonotoneTol = 1e-12;

  explicit QuantileSpace(std::size_t M) : M_(M) { require(M >= 2, "QuantileSpace: grid size must be >= 2"); }

  std::string name() const override { return "quantile"; }
  std::size_t dimension() const override { return M_; }
  std::size_t grid_size() const { return M_; }
  double scale() const override { return 1.0 / std::sqrt(static_cast<double>(M_)); }

  /// Node s_i for 0-based index i.
  double node(std::size_t i) const { return (static_cast<double>(i) + 0.5) / static_cast<double>(M_); }

  void validate(const Point& x) const override {
    check_dim(x);
    require(x.allFinite(), "quantile: non-finite entry");
    for (Eigen::Index i = 1; i < x.size(); ++i)
      if (x[i] < x[i - 1] - kMonotoneTol)
        throw Error("quantile: vector is not nondecreasing at index " + std::to_string(i));
  }

  /// Clamps round-off monotonicity violations; larger violations are errors.
  Point repair(const Point& x) const override {
    validate(x);
    for (Eigen::Index i = 1; i < x.size(); ++i)
      if (x[i] < x[i - 1]) return isotonic_projection(x);
    return x;
  }

 private:
  std::size_t M_;
};

inline double standard_normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "standard_normal_quantile: p outside (0,1)");
  static const boost::math::normal_distribution<double> N01(0.0, 1.0);
  return boost::math::quantile(N01, p);
}

/// Quantile vector of N(mean, variance) on the M-point midpoint grid.
inline Point gaussian_quantile(double mean, double variance, std::size_t M) {
  require(variance > 0.0 && std::isfinite(variance), "gaussian_quantile: variance must be > 0");
  require(M >= 2, "gaussian_quantile: M must be >= 2");
  const double sd = std::sqrt(variance);
  Point q(static_cast<Eigen::Index>(M));
  for (std::size_t i = 0; i < M; ++i) {
    const double s = (static_cast<double>(i) + 0.5) / static_cast<double>(M);
    q[static_cast<Eigen::Index>(i)] = mean + sd * standard_normal_quantile(s);
  }
  return q;
}

/// Mean of the represented measure (midpoint rule on the quantile function).
inline double quantile_mean(const Point& q) { return q.mean(); }

/// Variance of the represented measure (midpoint rule).
inline double quantile_variance(const Point& q) {
  const double m = q.mean();
  return (q.array() - m).square().mean();
}

inline void write_quantile_point(std::ostream& os, const Point& q) {
  os << "M=" << q.size() << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", q[i]);
    os << buf << '\n';
  }
}

inline Point read_quantile_point(std::istream& is) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "quantile file: missing header");
  require(line.rfind("M=", 0) == 0, "quantile file: header must be M=<int>");
  long M = 0;
  try {
    M = std::stol(line.substr(2));
  } catch (const std::exception&) {
    throw Error("quantile file: bad grid size in header");
  }
  require(M >= 2, "quantile file: grid size must be >= 2");
  Point q(M);
  for (long i = 0; i < M; ++i) {
    require(static_cast<bool>(std::getline(is, line)), "quantile file: fewer values than M");
    try {
      q[i] = std::stod(line);
    } catch (const std::exception&) {
      throw Error("quantile file: bad value on line " + std::to_string(i + 2));
    }
  }
  QuantileSpace(static_cast<std::size_t>(M)).validate(q);
  return q;
}

}  // namespace mmflow
