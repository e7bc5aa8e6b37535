#include <benchmark/benchmark.h>

#include <random>

#include "jumpflow/distributed_gd.hpp"
#include "jumpflow/experiment.hpp"
#include "jumpflow/montecarlo.hpp"
#include "jumpflow/stability.hpp"

using namespace jumpflow;

namespace {

struct Setup {
  ExperimentConfig cfg = preset("experiment2");
  QuadraticProblem problem = make_problem(cfg);
  std::vector<ChannelSpec> specs = make_channels(cfg, problem);
  DistributedSystem sys = assemble_distributed_system(problem, specs);
  Vector x0 = make_initial_state(cfg, problem);
  Vector y_star = problem.optimal_solution();
};

const Setup& setup() {
  static const Setup s;
  return s;
}

}  // namespace

static void BM_IntegratePath(benchmark::State& state) {
  const auto& s = setup();
  PathConfig pc{0.0, 10.0, 0.01, 0};
  double v = 0.0;
  for (auto _ : state) {
    ++pc.seed;
    const auto streams = sample_event_streams(s.sys.system.rates, pc.t0, pc.horizon, pc.seed);
    integrate(s.sys.system, streams, pc, s.x0,
              [&](std::size_t, double, const State& x) { v += x[0]; });
  }
  benchmark::DoNotOptimize(v);
}
BENCHMARK(BM_IntegratePath)->Unit(benchmark::kMillisecond);

static void BM_Ensemble(benchmark::State& state) {
  const auto& s = setup();
  EnsembleConfig c;
  c.n_paths = static_cast<std::size_t>(state.range(0));
  c.path = {0.0, 10.0, 0.01, 0};
  c.master_seed = 1;
  const auto V = [&](const State& x) { return lyapunov_V(s.sys.layout, s.y_star, x); };
  for (auto _ : state) benchmark::DoNotOptimize(run_ensemble(s.sys.system, s.x0, V, c).mean.back());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Ensemble)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_TheoremRates(benchmark::State& state) {
  const auto& s = setup();
  const auto method = static_cast<RateMethod>(state.range(0));
  const auto rho = uniform_rho(3, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(theorem_rates(s.problem, s.specs, rho, 0.3, method).lambda_s);
}
BENCHMARK(BM_TheoremRates)->DenseRange(0, 2);

static void BM_GeneratorLV(benchmark::State& state) {
  const auto& s = setup();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Vector v(18);
  for (auto& c : v) c = n(rng);
  const auto err = error_from_s(s.sys.layout, v);
  for (auto _ : state) benchmark::DoNotOptimize(generator_LV(s.problem, s.specs, err, 0.5, s.y_star));
}
BENCHMARK(BM_GeneratorLV);

BENCHMARK_MAIN();
