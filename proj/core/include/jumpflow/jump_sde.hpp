#pragma once

// Fixed-step integration of ODEs interrupted by Poisson-driven jumps:
//
//   dx = f(t, x) dt + sum_c g_c(x) dN_c
//
// Between events the drift is advanced with explicit Euler steps of size at
// most h; each event applies its jump map to the left-limit state.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace jumpflow {

using State = Eigen::VectorXd;
using ChannelId = std::size_t;

/// Arrival times of one Poisson counting process on [t0, T].
struct EventStream {
  ChannelId channel_id = 0;
  double rate = 0.0;
  std::vector<double> times;
};

struct PathConfig {
  double t0 = 0.0;
  double horizon = 1.0;  ///< final time T
  double step = 0.01;    ///< maximal Euler step h
  std::uint64_t seed = 0;

  void validate() const;
  /// Uniform grid t0, t0 + h, ..., T. The last interval may be shorter.
  std::vector<double> grid() const;
};

/// Where jumps land relative to the Euler grid.
enum class JumpTiming {
  kExact,  ///< the step straddling an event is split at the event time
  kGrid,   ///< events are deferred to the end of the step that contains them
};

/// Drift f(t, x) written into `dx` (already sized like `x`).
using DriftFn = std::function<void(double t, const State& x, State& dx)>;

/// Jump map. Receives the left-limit state and overwrites it with the
/// post-jump value x(t) = x(t⁻) + g(x(t⁻)).
using JumpFn = std::function<void(State& x)>;

/// A Poisson-driven system: one drift plus one jump map and rate per channel.
struct JumpSystem {
  std::size_t dim = 0;
  DriftFn drift;
  std::vector<JumpFn> jumps;
  std::vector<double> rates;  ///< rates[c] is the intensity of channel c

  std::size_t channel_count() const { return jumps.size(); }
};

/// Right-continuous samples on the uniform grid.
struct SamplePath {
  std::vector<double> grid;
  std::vector<State> states;
  std::vector<EventStream> events;
};

/// Called once per grid point with the post-jump state.
using PathObserver = std::function<void(std::size_t index, double t, const State& x)>;

/// Exponential inter-arrival sampling on (t0, T] from a seed that is private to
/// this stream. Throws InvalidArgument for rate <= 0 or T <= t0.
EventStream sample_jump_times(ChannelId channel_id, double rate, double t0, double horizon,
                              std::uint64_t stream_seed);

/// One stream per rate; stream c is seeded with derive_seed(master_seed, c).
std::vector<EventStream> sample_event_streams(std::span<const double> rates, double t0,
                                              double horizon, std::uint64_t master_seed);

/// Integrates `system` from `x0` under the given event streams, reporting every
/// grid point to `observer`. Simultaneous events are applied in ascending
/// channel_id order. Throws NumericalDivergence on a non-finite state.
void integrate(const JumpSystem& system, std::span<const EventStream> streams,
               const PathConfig& config, const State& x0, const PathObserver& observer,
               JumpTiming timing = JumpTiming::kExact);

/// Same as `integrate` but stores the whole path.
SamplePath integrate_path(const JumpSystem& system, std::vector<EventStream> streams,
                          const PathConfig& config, const State& x0,
                          JumpTiming timing = JumpTiming::kExact);

/// Samples streams from config.seed and the system rates, then integrates.
SamplePath simulate(const JumpSystem& system, const PathConfig& config, const State& x0,
                    JumpTiming timing = JumpTiming::kExact);

}  // namespace jumpflow
