#pragma once

// Distributed gradient flow over Poisson channels. Agent i integrates
//
//   dx_i = −(Q_ii x_i + Σ_{j≠i} Q_ij z_(j,i) + q_i) dt
//
// where z_(j,i) is its local copy of x_j, refreshed only at events of N_(j,i).
//
// Stacked state layout: [x_1, ..., x_n, z_c for each channel c in edge order].

#include <cstddef>
#include <optional>
#include <vector>

#include "jumpflow/channels.hpp"
#include "jumpflow/jump_sde.hpp"
#include "jumpflow/quadratic_problem.hpp"

namespace jumpflow {

class NetworkLayout {
 public:
  NetworkLayout(const QuadraticProblem& problem, const Topology& topology);

  std::size_t agents() const { return agent_sizes_.size(); }
  std::size_t agent_dim() const { return agent_dim_; }
  std::size_t total_dim() const { return total_dim_; }
  std::size_t channel_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }

  std::size_t agent_offset(std::size_t i) const { return agent_offsets_.at(i); }
  std::size_t agent_size(std::size_t i) const { return agent_sizes_.at(i); }
  /// Offset of channel c inside the stacked state (after all agents).
  std::size_t channel_offset(std::size_t c) const { return channel_offsets_.at(c); }
  /// Channel c carries the sender's block, so its size is d_sender.
  std::size_t channel_size(std::size_t c) const { return agent_sizes_.at(edges_.at(c).sender); }
  /// Offset of channel c inside the stacked copy-error vector e.
  std::size_t error_offset(std::size_t c) const { return channel_offset(c) - agent_dim_; }
  std::size_t error_dim() const { return total_dim_ - agent_dim_; }

  std::optional<std::size_t> channel_index(Edge edge) const;
  /// Channels whose receiver is agent i.
  const std::vector<std::size_t>& inbound(std::size_t i) const { return inbound_.at(i); }

 private:
  std::vector<std::size_t> agent_sizes_;
  std::vector<std::size_t> agent_offsets_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> channel_offsets_;
  std::vector<std::vector<std::size_t>> inbound_;
  std::size_t agent_dim_ = 0;
  std::size_t total_dim_ = 0;
};

struct NetworkState {
  std::vector<Vector> agent_states;    ///< x_i
  std::vector<Vector> channel_states;  ///< z_c in layout edge order
};

Vector stack(const NetworkLayout& layout, const NetworkState& state);
NetworkState unstack(const NetworkLayout& layout, const Vector& stacked);

/// x as given, every copy z_(j,i) = x_j.
NetworkState synchronized_state(const NetworkLayout& layout, const Vector& x);

/// Synchronized start on the sphere ‖x − y*‖² = v0 along the all-ones direction.
NetworkState default_initial_state(const NetworkLayout& layout, const Vector& y_star,
                                   double v0 = 1.5);

/// x̃ = x − y*, z̃_(j,i) = z_(j,i) − y*_j, e_(j,i) = x̃_j − z̃_(j,i).
struct ErrorCoordinates {
  Vector x_tilde;
  std::vector<Vector> z_tilde;
  std::vector<Vector> e;
};

ErrorCoordinates to_error_coordinates(const NetworkLayout& layout, const NetworkState& state,
                                      const Vector& y_star);
NetworkState from_error_coordinates(const NetworkLayout& layout, const ErrorCoordinates& error,
                                    const Vector& y_star);

/// s = (x̃, e) with e stacked in edge order.
Vector stacked_s(const NetworkLayout& layout, const ErrorCoordinates& error);
/// Inverse of stacked_s; z̃ is recovered as x̃_j − e.
ErrorCoordinates error_from_s(const NetworkLayout& layout, const Vector& s);

/// A jump system together with the layout and (edge-sorted) channel specs
/// it was built from.
struct DistributedSystem {
  NetworkLayout layout;
  std::vector<ChannelSpec> channels;
  JumpSystem system;
};

/// Validates `channels` (complete graph, each edge once) and sorts them into
/// layout edge order. Throws AssemblyError otherwise.
std::vector<ChannelSpec> canonical_channels(const QuadraticProblem& problem,
                                           std::vector<ChannelSpec> channels);

/// dy = −(Qy + q) dt, as a jump system without channels.
JumpSystem nominal_flow(const QuadraticProblem& problem);

/// Agent/channel system on the stacked state. Specs may come in any order but
/// must cover the complete graph exactly once; otherwise AssemblyError.
DistributedSystem assemble_distributed_system(const QuadraticProblem& problem,
                                              std::vector<ChannelSpec> channels);

/// The same system in shifted coordinates (x̃, z̃); analysis only.
DistributedSystem assemble_error_system(const QuadraticProblem& problem,
                                        std::vector<ChannelSpec> channels, const Vector& y_star);

}  // namespace jumpflow
