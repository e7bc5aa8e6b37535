#pragma once

// Channel dynamics for one directed link (j, i):
//
//   dz = a(t) z dt + (x_j − z) dN_(j,i),   y = z
//
// a ≡ 0 is the ideal sample-and-hold channel, a ≠ 0 the leaky integrator.

#include <vector>

#include <Eigen/Dense>

#include "jumpflow/quadratic_problem.hpp"

namespace jumpflow {

/// Piecewise-constant drift coefficient a(t).
///
/// values[0] applies for t < breakpoints[0], values[k] on
/// [breakpoints[k-1], breakpoints[k]), and values.back() from the last
/// breakpoint on. No breakpoints means a constant coefficient.
class DriftSchedule {
 public:
  DriftSchedule() : values_{0.0} {}
  DriftSchedule(double constant) : values_{constant} {}  // NOLINT: implicit on purpose
  DriftSchedule(std::vector<double> breakpoints, std::vector<double> values);

  double operator()(double t) const;
  double sup_abs() const;
  bool is_constant() const { return breakpoints_.empty(); }
  bool is_zero() const { return sup_abs() == 0.0; }

  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<double>& values() const { return values_; }

  friend bool operator==(const DriftSchedule&, const DriftSchedule&) = default;

 private:
  std::vector<double> breakpoints_;
  std::vector<double> values_;
};

struct ChannelSpec {
  Edge edge;
  double rate = 1.0;        ///< Poisson intensity λ_(j,i)
  DriftSchedule drift;      ///< a_(j,i)(t)
  double drift_bound = 0.0; ///< a_ji with |a_(j,i)(t)| <= a_ji

  /// Spec whose drift bound is the exact sup of the schedule.
  static ChannelSpec make(Edge edge, double rate, DriftSchedule drift = {});

  /// Throws InvalidArgument unless rate > 0 and drift_bound >= sup |a|.
  void validate() const;
};

/// a(t)·z.
Vector channel_drift(const ChannelSpec& spec, double t, const Vector& z);

/// Post-jump channel value: the sender's left-limit state, copied exactly.
Vector channel_jump(const Vector& sender_state, const Vector& z);

/// Closed-form flow between jumps for a constant coefficient: z·e^{a·dt}.
Vector channel_flow(double a, double dt, const Vector& z);

}  // namespace jumpflow
