#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jumpflow/distributed_gd.hpp"
#include "jumpflow/errors.hpp"
#include "jumpflow/experiment.hpp"
#include "jumpflow/stability.hpp"

using namespace jumpflow;

namespace {

std::vector<ChannelSpec> uniform_channels(std::size_t agents, double rate, DriftSchedule drift = {}) {
  std::vector<ChannelSpec> specs;
  const auto topology = Topology::complete(agents);
  for (const Edge& e : topology.edges()) specs.push_back(ChannelSpec::make(e, rate, drift));
  return specs;
}

QuadraticProblem example_problem() { return make_problem(preset("experiment1")); }

Vector random_vector(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> d;
  Vector v(static_cast<Eigen::Index>(n));
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST(NominalFlow, DriftIsNegativeGradient) {
  const auto p = example_problem();
  const auto sys = nominal_flow(p);
  State dx(6);
  sys.drift(0.0, p.optimal_solution(), dx);
  EXPECT_LE(dx.norm(), 1e-12);
  const Vector y = Vector::Ones(6);
  sys.drift(0.0, y, dx);
  EXPECT_LE((dx + p.Q() * y + p.q()).norm(), 1e-12);
}

TEST(NominalFlow, ScalarExponential) {
  const QuadraticProblem p(Matrix::Identity(1, 1), Vector::Zero(1), {1});
  const auto path = integrate_path(nominal_flow(p), {}, {0.0, 1.0, 1e-4, 0}, Vector::Ones(1));
  EXPECT_NEAR(path.states.back()[0], std::exp(-1.0), 1e-4);
}

TEST(NominalFlow, StaysBelowSpectralBound) {
  const auto p = example_problem();
  const Vector y_star = p.optimal_solution();
  const Vector y0 = y_star + Vector::Constant(6, 0.5);
  const auto path = integrate_path(nominal_flow(p), {}, {0.0, 10.0, 0.01, 0}, y0);
  const double v0 = (y0 - y_star).squaredNorm();
  for (std::size_t k = 0; k < path.grid.size(); ++k) {
    const double v = (path.states[k] - y_star).squaredNorm();
    EXPECT_LE(v, v0 * std::exp(-2.0 * p.min_eigenvalue() * path.grid[k]) * (1.0 + 1e-12));
  }
}

TEST(DistributedSystem, ReferenceDimensions) {
  const auto sys = assemble_distributed_system(example_problem(), uniform_channels(3, 10.0));
  EXPECT_EQ(sys.system.dim, 18u);
  EXPECT_EQ(sys.layout.channel_count(), 6u);
  EXPECT_EQ(sys.layout.error_dim(), 12u);
  EXPECT_EQ(sys.system.rates.size(), 6u);
}

TEST(DistributedSystem, SynchronizedStateReproducesNominalDrift) {
  const auto p = example_problem();
  const auto sys = assemble_distributed_system(p, uniform_channels(3, 10.0));
  std::mt19937_64 rng(1);
  const Vector x = random_vector(rng, 6);
  const Vector stacked = stack(sys.layout, synchronized_state(sys.layout, x));
  State dx(18), dy(6);
  sys.system.drift(0.0, stacked, dx);
  nominal_flow(p).drift(0.0, x, dy);
  EXPECT_LE((dx.head(6) - dy).norm(), 1e-12);
  EXPECT_EQ(dx.tail(12), Vector::Zero(12));
}

TEST(DistributedSystem, JumpTouchesOnlyItsChannel) {
  const auto p = example_problem();
  const auto sys = assemble_distributed_system(p, uniform_channels(3, 10.0));
  std::mt19937_64 rng(2);
  const Vector before = random_vector(rng, 18);
  for (std::size_t c = 0; c < sys.layout.channel_count(); ++c) {
    State x = before;
    sys.system.jumps[c](x);
    const auto off = static_cast<Eigen::Index>(sys.layout.channel_offset(c));
    const auto len = static_cast<Eigen::Index>(sys.layout.channel_size(c));
    const std::size_t j = sys.layout.edges()[c].sender;
    for (Eigen::Index k = 0; k < 18; ++k) {
      if (k >= off && k < off + len) {
        EXPECT_EQ(x[k], before[static_cast<Eigen::Index>(sys.layout.agent_offset(j)) + (k - off)]);
      } else {
        EXPECT_EQ(x[k], before[k]);
      }
    }
  }
}

TEST(DistributedSystem, RejectsIncompleteTopology) {
  auto specs = uniform_channels(3, 10.0);
  specs.pop_back();
  EXPECT_THROW(assemble_distributed_system(example_problem(), specs), AssemblyError);
  specs.push_back(specs.front());
  EXPECT_THROW(assemble_distributed_system(example_problem(), specs), AssemblyError);
}

TEST(DistributedSystem, ChannelOrderDoesNotMatter) {
  auto specs = uniform_channels(3, 10.0);
  std::reverse(specs.begin(), specs.end());
  const auto sys = assemble_distributed_system(example_problem(), specs);
  EXPECT_TRUE(std::is_sorted(sys.channels.begin(), sys.channels.end(),
                             [](const auto& a, const auto& b) { return a.edge < b.edge; }));
}

TEST(DistributedSystem, SingleAgentMatchesNominalBitForBit) {
  auto cfg = preset("nominal");
  const auto p = make_problem(cfg);
  const auto sys = assemble_distributed_system(p, {});
  EXPECT_EQ(sys.system.dim, 6u);
  const Vector y0 = Vector::Constant(6, 2.0);
  const PathConfig pc{0.0, 5.0, 0.01, 0};
  const auto a = integrate_path(sys.system, {}, pc, y0);
  const auto b = integrate_path(nominal_flow(p), {}, pc, y0);
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    for (Eigen::Index i = 0; i < 6; ++i) EXPECT_EQ(a.states[k][i], b.states[k][i]);
  }
}

TEST(DistributedSystem, EquilibriumIsInvariantWithoutDrift) {
  const auto p = example_problem();
  const auto sys = assemble_distributed_system(p, uniform_channels(3, 10.0));
  const Vector eq = stack(sys.layout, synchronized_state(sys.layout, p.optimal_solution()));
  State dx(18);
  sys.system.drift(0.0, eq, dx);
  EXPECT_LE(dx.norm(), 1e-12);
  for (const auto& jump : sys.system.jumps) {
    State x = eq;
    jump(x);
    EXPECT_EQ(x, eq);
  }
}

TEST(ErrorCoordinates, EquilibriumMapsToOrigin) {
  const auto p = example_problem();
  const NetworkLayout layout(p, Topology::complete(3));
  const auto err = to_error_coordinates(layout, synchronized_state(layout, p.optimal_solution()), p.optimal_solution());
  EXPECT_LE(err.x_tilde.norm(), 1e-15);
  for (const auto& e : err.e) EXPECT_LE(e.norm(), 1e-15);
  for (const auto& z : err.z_tilde) EXPECT_LE(z.norm(), 1e-15);
}

TEST(ErrorCoordinates, DirectSubstitution) {
  const auto p = example_problem();
  const NetworkLayout layout(p, Topology::complete(3));
  const Vector y_star = p.optimal_solution();
  const Vector u{{1, 2, 3, 4, 5, 6}};
  NetworkState state = synchronized_state(layout, y_star);
  for (std::size_t i = 0; i < 3; ++i) state.agent_states[i] += p.segment(u, i);
  const auto err = to_error_coordinates(layout, state, y_star);
  EXPECT_LE((err.x_tilde - u).norm(), 1e-14);
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    EXPECT_LE(err.z_tilde[c].norm(), 1e-14);
    EXPECT_LE((err.e[c] - p.segment(u, layout.edges()[c].sender)).norm(), 1e-14);
  }
}

TEST(ErrorCoordinates, RoundTripAndIdentity) {
  const auto p = example_problem();
  const NetworkLayout layout(p, Topology::complete(3));
  const Vector y_star = p.optimal_solution();
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector x = random_vector(rng, 18);
    const NetworkState state = unstack(layout, x);
    const auto err = to_error_coordinates(layout, state, y_star);
    for (std::size_t c = 0; c < layout.channel_count(); ++c) {
      const std::size_t j = layout.edges()[c].sender;
      EXPECT_LE((err.e[c] + err.z_tilde[c] - p.segment(err.x_tilde, j)).norm(), 1e-14);
    }
    EXPECT_LE((stack(layout, from_error_coordinates(layout, err, y_star)) - x).norm(), 1e-14);
    const Vector s = stacked_s(layout, err);
    const auto back = error_from_s(layout, s);
    EXPECT_LE((stacked_s(layout, back) - s).norm(), 1e-15);
  }
}

TEST(ErrorSystem, ZeroDriftHasNoChannelDriftAndCopiesOnJump) {
  const auto p = example_problem();
  const auto sys = assemble_error_system(p, uniform_channels(3, 10.0), p.optimal_solution());
  std::mt19937_64 rng(4);
  const Vector s = random_vector(rng, 18);
  State dx(18);
  sys.system.drift(0.0, s, dx);
  EXPECT_EQ(dx.tail(12), Vector::Zero(12));
  State x = s;
  sys.system.jumps[0](x);
  EXPECT_EQ(x.segment(6, 3), s.head(3));
}

TEST(ErrorSystem, ZeroOptimumGivesSameSystem) {
  const QuadraticProblem p(Matrix{{2.0, 1.0}, {1.0, 2.0}}, Vector::Zero(2), {1, 1});
  const auto specs = uniform_channels(2, 5.0, 0.7);
  const auto a = assemble_distributed_system(p, specs);
  const auto b = assemble_error_system(p, specs, Vector::Zero(2));
  const Vector x{{0.3, -0.2, 0.5, 1.0}};
  State da(4), db(4);
  a.system.drift(0.0, x, da);
  b.system.drift(0.0, x, db);
  EXPECT_EQ(da, db);
}

TEST(ErrorSystem, MatchesOriginalOnReferenceProblem) {
  const auto p = example_problem();
  const Vector y_star = p.optimal_solution();
  const auto specs = uniform_channels(3, 26.0, 1.0);
  const auto orig = assemble_distributed_system(p, specs);
  const auto err = assemble_error_system(p, specs, y_star);
  const auto& layout = orig.layout;
  const NetworkState x0 = default_initial_state(layout, y_star);
  const auto e0 = to_error_coordinates(layout, x0, y_star);
  NetworkState s0;
  s0.agent_states = unstack(layout, stacked_s(layout, e0)).agent_states;
  s0.channel_states = e0.z_tilde;
  const PathConfig pc{0.0, 5.0, 0.01, 31};
  const auto streams = sample_event_streams(orig.system.rates, 0.0, 5.0, 31);
  const auto a = integrate_path(orig.system, streams, pc, stack(layout, x0));
  const auto b = integrate_path(err.system, streams, pc, stack(layout, s0));
  double worst = 0.0;
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    const NetworkState back = from_error_coordinates(
        layout, to_error_coordinates(layout, unstack(layout, b.states[k]), Vector::Zero(6)), y_star);
    worst = std::max(worst, (stack(layout, back) - a.states[k]).cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(InitialState, DefaultSitsOnTheSphere) {
  const auto p = example_problem();
  const NetworkLayout layout(p, Topology::complete(3));
  const Vector y_star = p.optimal_solution();
  const auto state = default_initial_state(layout, y_star);
  EXPECT_NEAR(lyapunov_V(to_error_coordinates(layout, state, y_star)), 1.5, 1e-12);
}
