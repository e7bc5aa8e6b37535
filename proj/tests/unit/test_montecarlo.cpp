#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "jumpflow/errors.hpp"
#include "jumpflow/montecarlo.hpp"

using namespace jumpflow;

namespace {

// ẋ = −x with resets x → x/2 at rate 3.
JumpSystem decay_with_resets() {
  JumpSystem s;
  s.dim = 1;
  s.drift = [](double, const State& x, State& dx) { dx = -x; };
  s.jumps.push_back([](State& x) { x *= 0.5; });
  s.rates.push_back(3.0);
  return s;
}

JumpSystem deterministic_decay() {
  JumpSystem s;
  s.dim = 1;
  s.drift = [](double, const State& x, State& dx) { dx = -x; };
  return s;
}

double square(const State& x) { return x.squaredNorm(); }

EnsembleConfig config(std::size_t n, std::size_t threads = 1) {
  EnsembleConfig c;
  c.n_paths = n;
  c.path = {0.0, 2.0, 0.01, 0};
  c.master_seed = 77;
  c.threads = threads;
  return c;
}

EnsembleStats from_curve(const std::vector<double>& grid, double (*f)(double)) {
  std::vector<double> row;
  for (double t : grid) row.push_back(f(t));
  return summarize(grid, {row});
}

std::vector<double> grid_0_10() {
  std::vector<double> g;
  for (int k = 0; k <= 1000; ++k) g.push_back(0.01 * k);
  return g;
}

}  // namespace

TEST(Ensemble, DeterministicSystemHasDegenerateBand) {
  const auto stats = run_ensemble(deterministic_decay(), State::Ones(1), square, config(20));
  for (std::size_t k = 0; k < stats.grid.size(); ++k) {
    EXPECT_DOUBLE_EQ(stats.band_low[k], stats.mean[k]);
    EXPECT_DOUBLE_EQ(stats.band_high[k], stats.mean[k]);
    EXPECT_NEAR(stats.sem[k], 0.0, 1e-15);
  }
}

TEST(Ensemble, SinglePath) {
  const auto stats = run_ensemble(decay_with_resets(), State::Ones(1), square, config(1));
  EXPECT_EQ(stats.n_paths, 1u);
  EXPECT_EQ(stats.mean, stats.band_low);
  EXPECT_EQ(stats.mean, stats.band_high);
  EXPECT_EQ(stats.sem, std::vector<double>(stats.grid.size(), 0.0));
}

TEST(Ensemble, ReproducibleAndIndependentOfThreadCount) {
  const auto a = run_ensemble(decay_with_resets(), State::Ones(1), square, config(64, 1));
  const auto b = run_ensemble(decay_with_resets(), State::Ones(1), square, config(64, 1));
  const auto c = run_ensemble(decay_with_resets(), State::Ones(1), square, config(64, 4));
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.mean, c.mean);
  EXPECT_EQ(a.band_low, c.band_low);
  EXPECT_EQ(a.band_high, c.band_high);
}

TEST(Ensemble, DifferentSeedsDiffer) {
  auto other = config(64);
  other.master_seed = 78;
  const auto a = run_ensemble(decay_with_resets(), State::Ones(1), square, config(64));
  const auto b = run_ensemble(decay_with_resets(), State::Ones(1), square, other);
  EXPECT_NE(a.mean, b.mean);
}

TEST(Ensemble, MeanMatchesClosedForm) {
  // E x² = e^{−2t} E[4^{−N_t}] = exp(−2t − 3t(1 − 1/4)).
  const auto stats = run_ensemble(decay_with_resets(), State::Ones(1), square, config(4000));
  const double t = stats.grid.back();
  const double exact = std::exp(-2.0 * t - 2.25 * t);
  EXPECT_NEAR(stats.mean.back(), exact, 5.0 * stats.sem.back() + 0.04 * exact);
}

TEST(Ensemble, KeepsPathsOnRequest) {
  auto c = config(5);
  c.keep_paths = true;
  const auto stats = run_ensemble(decay_with_resets(), State::Ones(1), square, c);
  ASSERT_EQ(stats.paths.size(), 5u);
  EXPECT_EQ(stats.paths[0].size(), stats.grid.size());
  EXPECT_TRUE(run_ensemble(decay_with_resets(), State::Ones(1), square, config(5)).paths.empty());
}

TEST(Ensemble, DivergenceNamesThePath) {
  JumpSystem s;
  s.dim = 1;
  s.drift = [](double, const State& x, State& dx) { dx = 1e3 * x.cwiseAbs2(); };
  try {
    run_ensemble(s, State::Ones(1), square, config(3));
    FAIL() << "expected PathDiverged";
  } catch (const PathDiverged& e) {
    EXPECT_EQ(e.path(), 0u);
    EXPECT_GT(e.time(), 0.0);
  }
}

TEST(Ensemble, RejectsEmptyEnsemble) {
  EXPECT_THROW(run_ensemble(decay_with_resets(), State::Ones(1), square, config(0)), InvalidArgument);
}

TEST(Summaries, PercentilesUseLinearInterpolation) {
  std::vector<std::vector<double>> values;
  for (int k = 0; k <= 40; ++k) values.push_back({static_cast<double>(k)});
  const auto stats = summarize({0.0}, values);
  EXPECT_DOUBLE_EQ(stats.band_low[0], 1.0);
  EXPECT_DOUBLE_EQ(stats.band_high[0], 39.0);
  EXPECT_DOUBLE_EQ(stats.mean[0], 20.0);
  EXPECT_DOUBLE_EQ(quantile_sorted({0.0, 10.0}, 0.25), 2.5);
  EXPECT_THROW(quantile_sorted({}, 0.5), InvalidArgument);
}

TEST(Summaries, InvariantUnderPathPermutation) {
  const std::vector<std::vector<double>> values{{1.0, 5.0}, {3.0, 2.0}, {2.0, 9.0}};
  const std::vector<std::vector<double>> shuffled{values[2], values[0], values[1]};
  const auto a = summarize({0.0, 1.0}, values);
  const auto b = summarize({0.0, 1.0}, shuffled);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_DOUBLE_EQ(a.mean[k], b.mean[k]);
    EXPECT_DOUBLE_EQ(a.sem[k], b.sem[k]);
  }
  EXPECT_EQ(a.band_low, b.band_low);
  EXPECT_EQ(a.band_high, b.band_high);
}

TEST(Summaries, JensenCheck) {
  const auto stats = summarize({0.0}, {{1.0}, {4.0}, {9.0}});
  ASSERT_TRUE(stats.jensen.applicable);
  EXPECT_DOUBLE_EQ(stats.jensen.mean_root, 2.0);
  EXPECT_DOUBLE_EQ(stats.jensen.root_mean, std::sqrt(14.0 / 3.0));
  EXPECT_TRUE(stats.jensen.holds);
  EXPECT_FALSE(summarize({0.0}, {{-1.0}, {4.0}}).jensen.applicable);
}

TEST(DecayFit, RecoversExponent) {
  const auto stats = from_curve(grid_0_10(), [](double t) { return 1.5 * std::exp(-0.62 * t); });
  EXPECT_NEAR(fit_decay_rate(stats, 1.0, 8.0), 0.62, 1e-9);
  const auto flat = from_curve(grid_0_10(), [](double) { return 0.3; });
  EXPECT_NEAR(fit_decay_rate(flat, 1.0, 8.0), 0.0, 1e-12);
}

TEST(DecayFit, RejectsBadWindows) {
  const auto stats = from_curve(grid_0_10(), [](double t) { return std::exp(-t); });
  EXPECT_THROW(fit_decay_rate(stats, 8.0, 1.0), InvalidArgument);
  EXPECT_THROW(fit_decay_rate(stats, 1.001, 1.002), InvalidArgument);
  const auto zero = from_curve(grid_0_10(), [](double t) { return t < 5.0 ? 1.0 : 0.0; });
  EXPECT_THROW(fit_decay_rate(zero, 1.0, 8.0), InvalidArgument);
}

TEST(Plateau, TailAverage) {
  const auto flat = from_curve(grid_0_10(), [](double) { return 0.5; });
  EXPECT_DOUBLE_EQ(plateau_level(flat, 0.2), 0.5);
  // 0.05 + 0.5e^{−t}: tail mean on [8, 10] is close to 0.05.
  const auto decaying = from_curve(grid_0_10(), [](double t) { return 0.05 + 0.5 * std::exp(-t); });
  EXPECT_NEAR(plateau_level(decaying, 0.2), 0.05, 1e-4);
  EXPECT_THROW(plateau_level(flat, 0.0), InvalidArgument);
  EXPECT_THROW(plateau_level(flat, 1.0), InvalidArgument);
}

TEST(Csv, HeaderDependsOnlyOnFlags) {
  CsvOptions o;
  EXPECT_EQ(csv_header(o, 3), (std::vector<std::string>{"t", "mean", "band_low", "band_high"}));
  o.sem_columns = true;
  o.reference = [](double t) { return t; };
  o.reference_name = "nominal";
  o.path_columns = true;
  EXPECT_EQ(csv_header(o, 2), (std::vector<std::string>{"t", "mean", "band_low", "band_high", "sem_low",
                                                        "sem_high", "nominal", "path_0", "path_1"}));
}

TEST(Csv, RowsRoundTrip) {
  auto c = config(3);
  c.keep_paths = true;
  const auto stats = run_ensemble(decay_with_resets(), State::Ones(1), square, c);
  CsvOptions o;
  o.path_columns = true;
  o.sem_columns = true;
  std::ostringstream out;
  write_csv(out, stats, o);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,mean,band_low,band_high,sem_low,sem_high,path_0,path_1,path_2");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    std::vector<double> v;
    while (std::getline(cells, cell, ',')) v.push_back(std::stod(cell));
    ASSERT_EQ(v.size(), 9u);
    EXPECT_EQ(v[0], stats.grid[rows]);
    EXPECT_EQ(v[1], stats.mean[rows]);
    EXPECT_EQ(v[6], stats.paths[0][rows]);
    ++rows;
  }
  EXPECT_EQ(rows, stats.grid.size());
}

TEST(Csv, PathColumnsNeedKeptPaths) {
  const auto stats = run_ensemble(decay_with_resets(), State::Ones(1), square, config(3));
  CsvOptions o;
  o.path_columns = true;
  std::ostringstream out;
  EXPECT_THROW(write_csv(out, stats, o), InvalidArgument);
}
