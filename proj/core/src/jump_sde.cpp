#include "jumpflow/jump_sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>

#include "jumpflow/errors.hpp"
#include "jumpflow/random.hpp"

namespace jumpflow {

namespace {

struct Event {
  double time;
  ChannelId channel;
};

bool all_finite(const State& x) { return x.allFinite(); }

std::vector<Event> merge_events(std::span<const EventStream> streams, const PathConfig& config,
                                std::size_t channel_count) {
  std::vector<Event> events;
  for (const auto& stream : streams) {
    if (stream.channel_id >= channel_count) {
      throw InvalidArgument("event stream refers to unknown channel " +
                            std::to_string(stream.channel_id));
    }
    double previous = -std::numeric_limits<double>::infinity();
    for (double t : stream.times) {
      if (!(t >= config.t0 && t <= config.horizon)) {
        throw InvalidArgument("event time outside [t0, T]");
      }
      if (!(t > previous)) throw InvalidArgument("event times must be strictly increasing");
      previous = t;
      events.push_back({t, stream.channel_id});
    }
  }
  std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return a.time < b.time || (a.time == b.time && a.channel < b.channel);
  });
  return events;
}

[[noreturn]] void diverged(double t) {
  std::ostringstream msg;
  msg << "state became non-finite at t = " << t;
  throw NumericalDivergence(msg.str(), t);
}

}  // namespace

void PathConfig::validate() const {
  if (!std::isfinite(t0)) throw InvalidArgument("t0 must be finite");
  if (!(horizon > t0) || !std::isfinite(horizon)) {
    throw InvalidArgument("horizon must be finite and greater than t0");
  }
  if (!(step > 0.0)) throw InvalidArgument("step must be positive");
  if (step > horizon - t0) throw InvalidArgument("step must not exceed the integration interval");
}

std::vector<double> PathConfig::grid() const {
  validate();
  const double span = horizon - t0;
  // Guard against (T - t0)/h landing a hair above an integer.
  const auto steps = static_cast<std::size_t>(std::ceil(span / step - 1e-9));
  std::vector<double> points(steps + 1);
  for (std::size_t k = 0; k < steps; ++k) points[k] = t0 + static_cast<double>(k) * step;
  points[steps] = horizon;
  return points;
}

EventStream sample_jump_times(ChannelId channel_id, double rate, double t0, double horizon,
                              std::uint64_t stream_seed) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidArgument("rate must be positive");
  if (!(horizon > t0)) throw InvalidArgument("empty interval: T must exceed t0");

  EventStream stream{channel_id, rate, {}};
  std::mt19937_64 rng(stream_seed);
  std::exponential_distribution<double> gap(rate);
  double t = t0;
  for (;;) {
    t += gap(rng);
    if (t > horizon) break;
    // A zero gap is possible in principle; keep times strictly increasing.
    if (!stream.times.empty() && t <= stream.times.back()) continue;
    if (t <= t0) continue;
    stream.times.push_back(t);
  }
  return stream;
}

std::vector<EventStream> sample_event_streams(std::span<const double> rates, double t0,
                                              double horizon, std::uint64_t master_seed) {
  std::vector<EventStream> streams;
  streams.reserve(rates.size());
  for (std::size_t c = 0; c < rates.size(); ++c) {
    streams.push_back(sample_jump_times(c, rates[c], t0, horizon, derive_seed(master_seed, c)));
  }
  return streams;
}

void integrate(const JumpSystem& system, std::span<const EventStream> streams,
               const PathConfig& config, const State& x0, const PathObserver& observer,
               JumpTiming timing) {
  if (static_cast<std::size_t>(x0.size()) != system.dim) {
    throw InvalidArgument("initial state has wrong dimension");
  }
  if (!system.drift) throw InvalidArgument("system has no drift");
  const std::vector<double> grid = config.grid();
  const std::vector<Event> events = merge_events(streams, config, system.channel_count());

  State x = x0;
  State dx(x.size());
  double t = config.t0;

  auto advance = [&](double to) {
    const double dt = to - t;
    if (dt > 0.0) {
      dx.setZero();
      system.drift(t, x, dx);
      x.noalias() += dt * dx;
      if (!all_finite(x)) diverged(to);
    }
    t = to;
  };
  auto jump = [&](const Event& e) {
    system.jumps[e.channel](x);
    if (!all_finite(x)) diverged(e.time);
  };

  std::size_t next = 0;
  while (next < events.size() && events[next].time <= grid[0]) jump(events[next++]);
  if (!all_finite(x)) diverged(t);
  observer(0, t, x);

  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double target = grid[k];
    if (timing == JumpTiming::kExact) {
      while (next < events.size() && events[next].time <= target) {
        advance(events[next].time);
        jump(events[next++]);
      }
      advance(target);
    } else {
      advance(target);
      while (next < events.size() && events[next].time <= target) jump(events[next++]);
    }
    observer(k, target, x);
  }
}

SamplePath integrate_path(const JumpSystem& system, std::vector<EventStream> streams,
                          const PathConfig& config, const State& x0, JumpTiming timing) {
  SamplePath path;
  path.grid = config.grid();
  path.states.resize(path.grid.size());
  integrate(system, streams, config, x0,
            [&](std::size_t k, double, const State& x) { path.states[k] = x; }, timing);
  path.events = std::move(streams);
  return path;
}

SamplePath simulate(const JumpSystem& system, const PathConfig& config, const State& x0,
                    JumpTiming timing) {
  config.validate();
  auto streams = sample_event_streams(system.rates, config.t0, config.horizon, config.seed);
  return integrate_path(system, std::move(streams), config, x0, timing);
}

}  // namespace jumpflow
