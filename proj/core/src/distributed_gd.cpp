#include "jumpflow/distributed_gd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "jumpflow/errors.hpp"

namespace jumpflow {

NetworkLayout::NetworkLayout(const QuadraticProblem& problem, const Topology& topology)
    : agent_sizes_(problem.partition()), edges_(topology.edges()) {
  if (topology.agents() != problem.agents()) {
    throw InvalidArgument("topology and partition disagree on the number of agents");
  }
  agent_offsets_.resize(agents());
  for (std::size_t i = 0; i < agents(); ++i) {
    agent_offsets_[i] = agent_dim_;
    agent_dim_ += agent_sizes_[i];
  }
  total_dim_ = agent_dim_;
  inbound_.resize(agents());
  channel_offsets_.resize(edges_.size());
  for (std::size_t c = 0; c < edges_.size(); ++c) {
    channel_offsets_[c] = total_dim_;
    total_dim_ += agent_sizes_[edges_[c].sender];
    inbound_[edges_[c].receiver].push_back(c);
  }
}

std::optional<std::size_t> NetworkLayout::channel_index(Edge edge) const {
  const auto it = std::lower_bound(edges_.begin(), edges_.end(), edge);
  if (it == edges_.end() || *it != edge) return std::nullopt;
  return static_cast<std::size_t>(it - edges_.begin());
}

Vector stack(const NetworkLayout& layout, const NetworkState& state) {
  if (state.agent_states.size() != layout.agents() ||
      state.channel_states.size() != layout.channel_count()) {
    throw InvalidArgument("network state does not match the layout");
  }
  Vector out(layout.total_dim());
  for (std::size_t i = 0; i < layout.agents(); ++i) {
    if (static_cast<std::size_t>(state.agent_states[i].size()) != layout.agent_size(i)) {
      throw InvalidArgument("agent state has wrong dimension");
    }
    out.segment(layout.agent_offset(i), layout.agent_size(i)) = state.agent_states[i];
  }
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    if (static_cast<std::size_t>(state.channel_states[c].size()) != layout.channel_size(c)) {
      throw InvalidArgument("channel state dimension must equal the sender's block size");
    }
    out.segment(layout.channel_offset(c), layout.channel_size(c)) = state.channel_states[c];
  }
  return out;
}

NetworkState unstack(const NetworkLayout& layout, const Vector& stacked) {
  if (static_cast<std::size_t>(stacked.size()) != layout.total_dim()) {
    throw InvalidArgument("stacked state has wrong dimension");
  }
  NetworkState state;
  for (std::size_t i = 0; i < layout.agents(); ++i) {
    state.agent_states.push_back(stacked.segment(layout.agent_offset(i), layout.agent_size(i)));
  }
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    state.channel_states.push_back(
        stacked.segment(layout.channel_offset(c), layout.channel_size(c)));
  }
  return state;
}

NetworkState synchronized_state(const NetworkLayout& layout, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != layout.agent_dim()) {
    throw InvalidArgument("agent vector has wrong dimension");
  }
  NetworkState state;
  for (std::size_t i = 0; i < layout.agents(); ++i) {
    state.agent_states.push_back(x.segment(layout.agent_offset(i), layout.agent_size(i)));
  }
  for (const Edge& e : layout.edges()) {
    state.channel_states.push_back(state.agent_states[e.sender]);
  }
  return state;
}

NetworkState default_initial_state(const NetworkLayout& layout, const Vector& y_star, double v0) {
  if (!(v0 >= 0.0)) throw InvalidArgument("initial Lyapunov level must be nonnegative");
  const double d = static_cast<double>(layout.agent_dim());
  const Vector x = y_star + Vector::Constant(layout.agent_dim(), std::sqrt(v0 / d));
  return synchronized_state(layout, x);
}

ErrorCoordinates to_error_coordinates(const NetworkLayout& layout, const NetworkState& state,
                                      const Vector& y_star) {
  const Vector stacked = stack(layout, state);  // validates shapes
  if (static_cast<std::size_t>(y_star.size()) != layout.agent_dim()) {
    throw InvalidArgument("y* has wrong dimension");
  }
  ErrorCoordinates err;
  err.x_tilde = stacked.head(layout.agent_dim()) - y_star;
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    const std::size_t j = layout.edges()[c].sender;
    const auto y_j = y_star.segment(layout.agent_offset(j), layout.agent_size(j));
    Vector z_tilde = state.channel_states[c] - y_j;
    err.e.push_back(err.x_tilde.segment(layout.agent_offset(j), layout.agent_size(j)) - z_tilde);
    err.z_tilde.push_back(std::move(z_tilde));
  }
  return err;
}

NetworkState from_error_coordinates(const NetworkLayout& layout, const ErrorCoordinates& error,
                                    const Vector& y_star) {
  if (static_cast<std::size_t>(error.x_tilde.size()) != layout.agent_dim() ||
      error.z_tilde.size() != layout.channel_count()) {
    throw InvalidArgument("error coordinates do not match the layout");
  }
  NetworkState state;
  const Vector x = error.x_tilde + y_star;
  for (std::size_t i = 0; i < layout.agents(); ++i) {
    state.agent_states.push_back(x.segment(layout.agent_offset(i), layout.agent_size(i)));
  }
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    const std::size_t j = layout.edges()[c].sender;
    state.channel_states.push_back(error.z_tilde[c] +
                                   y_star.segment(layout.agent_offset(j), layout.agent_size(j)));
  }
  return state;
}

Vector stacked_s(const NetworkLayout& layout, const ErrorCoordinates& error) {
  Vector s(layout.total_dim());
  s.head(layout.agent_dim()) = error.x_tilde;
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    s.segment(layout.channel_offset(c), layout.channel_size(c)) = error.e[c];
  }
  return s;
}

ErrorCoordinates error_from_s(const NetworkLayout& layout, const Vector& s) {
  if (static_cast<std::size_t>(s.size()) != layout.total_dim()) {
    throw InvalidArgument("stacked error vector has wrong dimension");
  }
  ErrorCoordinates err;
  err.x_tilde = s.head(layout.agent_dim());
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    const std::size_t j = layout.edges()[c].sender;
    Vector e = s.segment(layout.channel_offset(c), layout.channel_size(c));
    err.z_tilde.push_back(err.x_tilde.segment(layout.agent_offset(j), layout.agent_size(j)) - e);
    err.e.push_back(std::move(e));
  }
  return err;
}

namespace {

// Read-only coefficients shared by the drift and jump closures.
struct Coupling {
  struct Inbound {
    std::size_t channel;
    Matrix q_block;  // Q_ij, i = receiver, j = sender
  };
  struct Agent {
    std::size_t offset = 0;
    std::size_t size = 0;
    Matrix q_diag;  // Q_ii
    Vector q_vec;   // q_i, zero in error coordinates
    std::vector<Inbound> inbound;
  };
  struct Channel {
    std::size_t offset = 0;
    std::size_t size = 0;
    std::size_t sender_offset = 0;
    DriftSchedule drift;
    Vector shift;  // a(t)·shift is added to the drift; y*_j in error coordinates
  };
  std::vector<Agent> agents;
  std::vector<Channel> channels;
};

void evaluate_drift(const Coupling& coupling, double t, const State& x, State& dx) {
  for (const auto& a : coupling.agents) {
    auto out = dx.segment(a.offset, a.size);
    out.noalias() = a.q_diag * x.segment(a.offset, a.size);
    for (const auto& in : a.inbound) {
      const auto& ch = coupling.channels[in.channel];
      out.noalias() += in.q_block * x.segment(ch.offset, ch.size);
    }
    out += a.q_vec;
    out = -out;
  }
  for (const auto& ch : coupling.channels) {
    const double a = ch.drift(t);
    auto out = dx.segment(ch.offset, ch.size);
    if (ch.shift.size() > 0) {
      out = a * (x.segment(ch.offset, ch.size) + ch.shift);
    } else {
      out = a * x.segment(ch.offset, ch.size);
    }
  }
}

}  // namespace

std::vector<ChannelSpec> canonical_channels(const QuadraticProblem& problem,
                                           std::vector<ChannelSpec> channels) {
  std::sort(channels.begin(), channels.end(),
            [](const ChannelSpec& a, const ChannelSpec& b) { return a.edge < b.edge; });
  std::vector<Edge> edges;
  for (const auto& spec : channels) {
    spec.validate();
    edges.push_back(spec.edge);
  }
  std::optional<Topology> topology;
  try {
    topology.emplace(problem.agents(), edges);
  } catch (const InvalidArgument& e) {
    throw AssemblyError(std::string("invalid channel set: ") + e.what());
  }
  if (!topology->is_complete()) {
    throw AssemblyError("distributed gradient flow requires a complete communication graph (" +
                        std::to_string(edges.size()) + " of " +
                        std::to_string(problem.agents() * (problem.agents() - 1)) +
                        " channels given)");
  }
  return channels;
}

namespace {

DistributedSystem build(const QuadraticProblem& problem, std::vector<ChannelSpec> channels,
                        const Vector* y_star) {
  channels = canonical_channels(problem, std::move(channels));
  NetworkLayout layout(problem, Topology::complete(problem.agents()));

  auto coupling = std::make_shared<Coupling>();
  for (std::size_t i = 0; i < layout.agents(); ++i) {
    Coupling::Agent agent;
    agent.offset = layout.agent_offset(i);
    agent.size = layout.agent_size(i);
    agent.q_diag = problem.block(i, i);
    agent.q_vec = y_star ? Vector::Zero(agent.size) : problem.block_vector(i);
    for (std::size_t c : layout.inbound(i)) {
      agent.inbound.push_back({c, problem.block(i, layout.edges()[c].sender)});
    }
    coupling->agents.push_back(std::move(agent));
  }
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    const std::size_t j = layout.edges()[c].sender;
    Coupling::Channel ch;
    ch.offset = layout.channel_offset(c);
    ch.size = layout.channel_size(c);
    ch.sender_offset = layout.agent_offset(j);
    ch.drift = channels[c].drift;
    if (y_star) ch.shift = y_star->segment(ch.sender_offset, ch.size);
    coupling->channels.push_back(std::move(ch));
  }

  JumpSystem system;
  system.dim = layout.total_dim();
  system.drift = [coupling](double t, const State& x, State& dx) {
    evaluate_drift(*coupling, t, x, dx);
  };
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    const auto& ch = coupling->channels[c];
    const std::size_t offset = ch.offset;
    const std::size_t size = ch.size;
    const std::size_t sender = ch.sender_offset;
    system.jumps.push_back([offset, size, sender](State& x) {
      x.segment(offset, size) = x.segment(sender, size);
    });
    system.rates.push_back(channels[c].rate);
  }
  return DistributedSystem{std::move(layout), std::move(channels), std::move(system)};
}

}  // namespace

JumpSystem nominal_flow(const QuadraticProblem& problem) {
  // Same arithmetic as the single-agent distributed system.
  auto coupling = std::make_shared<Coupling>();
  Coupling::Agent agent;
  agent.size = problem.dim();
  agent.q_diag = problem.Q();
  agent.q_vec = problem.q();
  coupling->agents.push_back(std::move(agent));
  JumpSystem system;
  system.dim = problem.dim();
  system.drift = [coupling](double t, const State& x, State& dx) {
    evaluate_drift(*coupling, t, x, dx);
  };
  return system;
}

DistributedSystem assemble_distributed_system(const QuadraticProblem& problem,
                                              std::vector<ChannelSpec> channels) {
  return build(problem, std::move(channels), nullptr);
}

DistributedSystem assemble_error_system(const QuadraticProblem& problem,
                                        std::vector<ChannelSpec> channels, const Vector& y_star) {
  if (static_cast<std::size_t>(y_star.size()) != problem.dim()) {
    throw InvalidArgument("y* has wrong dimension");
  }
  return build(problem, std::move(channels), &y_star);
}

}  // namespace jumpflow
