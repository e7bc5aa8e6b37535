#include "jumpflow/channels.hpp"

#include <algorithm>
#include <cmath>

#include "jumpflow/errors.hpp"

namespace jumpflow {

DriftSchedule::DriftSchedule(std::vector<double> breakpoints, std::vector<double> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
  if (values_.size() != breakpoints_.size() + 1) {
    throw InvalidArgument("drift schedule needs exactly one more value than breakpoints");
  }
  if (!std::is_sorted(breakpoints_.begin(), breakpoints_.end()) ||
      std::adjacent_find(breakpoints_.begin(), breakpoints_.end()) != breakpoints_.end()) {
    throw InvalidArgument("drift schedule breakpoints must be strictly increasing");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw InvalidArgument("drift schedule values must be finite");
  }
}

double DriftSchedule::operator()(double t) const {
  const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t);
  return values_[static_cast<std::size_t>(it - breakpoints_.begin())];
}

double DriftSchedule::sup_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

ChannelSpec ChannelSpec::make(Edge edge, double rate, DriftSchedule drift) {
  ChannelSpec spec{edge, rate, std::move(drift), 0.0};
  spec.drift_bound = spec.drift.sup_abs();
  spec.validate();
  return spec;
}

void ChannelSpec::validate() const {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidArgument("channel rate must be positive");
  if (!(drift_bound >= drift.sup_abs())) {
    throw InvalidArgument("drift_bound must dominate |a(t)| over the schedule");
  }
}

Vector channel_drift(const ChannelSpec& spec, double t, const Vector& z) { return spec.drift(t) * z; }

Vector channel_jump(const Vector& sender_state, const Vector& z) {
  if (sender_state.size() != z.size()) {
    throw InvalidArgument("channel state and sender state differ in dimension");
  }
  return sender_state;
}

Vector channel_flow(double a, double dt, const Vector& z) { return std::exp(a * dt) * z; }

}  // namespace jumpflow
