#pragma once

// Per-inequality audit records and their text serialization.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace mmflow {

struct AuditSample {
  std::string label;
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;  // lhs - rhs
};

/// Outcome of checking one inequality family on a set of samples.
///
/// The tolerance is abs_tol + rel_tol * (largest |lhs| or |rhs| seen), fixed
/// once by finalize(). A report that is not applicable (hypotheses unmet)
/// passes vacuously and says why in `note`.
class AuditReport {
 public:
  AuditReport() = default;
  AuditReport(std::string tag, double abs_tol, double rel_tol = 0.0)
      : tag_(std::move(tag)), abs_tol_(abs_tol), rel_tol_(rel_tol) {}

  static AuditReport not_applicable(std::string tag, std::string why) {
    AuditReport r(std::move(tag), 0.0);
    r.applicable_ = false;
    r.note_ = std::move(why);
    r.finalize();
    return r;
  }

  /// Adds "lhs <= rhs".
  void add(std::string label, double lhs, double rhs) {
    double res = lhs - rhs;
    if (std::isnan(res)) res = std::isinf(lhs) && std::isinf(rhs) && lhs < 0 ? -INFINITY : INFINITY;
    samples_.push_back({std::move(label), lhs, rhs, res});
    finalized_ = false;
  }

  /// Adds "|a - b| <= 0" as a two-sided comparison.
  void add_equal(std::string label, double a, double b) {
    samples_.push_back({std::move(label), a, b, std::abs(a - b)});
    finalized_ = false;
  }

  void set_note(std::string n) { note_ = std::move(n); }
  void append_note(const std::string& n) { note_ = note_.empty() ? n : note_ + "; " + n; }

  AuditReport& finalize() {
    compute();
    return *this;
  }

  const std::string& tag() const { return tag_; }
  bool pass() const { return computed().pass_; }
  bool applicable() const { return applicable_; }
  double tolerance() const { return computed().tolerance_; }
  double max_residual() const { return computed().max_residual_; }
  const std::vector<AuditSample>& samples() const { return samples_; }
  const std::string& note() const { return note_; }

  /// Index of the sample with the largest residual, or -1 when empty.
  long worst_index() const {
    long best = -1;
    for (std::size_t i = 0; i < samples_.size(); ++i)
      if (best < 0 || samples_[i].residual > samples_[static_cast<std::size_t>(best)].residual)
        best = static_cast<long>(i);
    return best;
  }

 private:
  void compute() const {
    double scale = 0.0;
    for (const auto& s : samples_) {
      if (std::isfinite(s.lhs)) scale = std::max(scale, std::abs(s.lhs));
      if (std::isfinite(s.rhs)) scale = std::max(scale, std::abs(s.rhs));
    }
    tolerance_ = abs_tol_ + rel_tol_ * scale;
    max_residual_ = samples_.empty() ? 0.0 : -INFINITY;
    pass_ = true;
    for (const auto& s : samples_) {
      max_residual_ = std::max(max_residual_, s.residual);
      if (!(s.residual <= tolerance_)) pass_ = false;
    }
    if (!applicable_) pass_ = true;
    finalized_ = true;
  }

  const AuditReport& computed() const {
    if (!finalized_) compute();
    return *this;
  }

  std::string tag_;
  double abs_tol_ = 0.0;
  double rel_tol_ = 0.0;
  std::vector<AuditSample> samples_;
  bool applicable_ = true;
  std::string note_;
  mutable bool finalized_ = false;
  mutable bool pass_ = true;
  mutable double tolerance_ = 0.0;
  mutable double max_residual_ = 0.0;
};

inline void write_report(std::ostream& os, const AuditReport& r, bool with_samples = false) {
  char buf[256];
  os << "[audit]\n";
  os << "tag = " << r.tag() << '\n';
  os << "pass = " << (r.pass() ? "true" : "false") << '\n';
  os << "applicable = " << (r.applicable() ? "true" : "false") << '\n';
  std::snprintf(buf, sizeof buf, "max_residual = %.17g\ntolerance = %.17g\n", r.max_residual(), r.tolerance());
  os << buf;
  os << "samples = " << r.samples().size() << '\n';
  if (!r.note().empty()) os << "note = " << r.note() << '\n';
  if (with_samples) {
    for (const auto& s : r.samples()) {
      std::snprintf(buf, sizeof buf, "  %.17g\t%.17g\t%.17g\t", s.lhs, s.rhs, s.residual);
      os << buf << s.label << '\n';
    }
  }
  os << '\n';
}

}  // namespace mmflow
