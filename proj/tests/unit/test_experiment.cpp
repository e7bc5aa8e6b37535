#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "jumpflow/errors.hpp"
#include "jumpflow/experiment.hpp"

using namespace jumpflow;

namespace {

std::string path_of_error(const std::string& json) {
  try {
    parse_config(json);
  } catch (const ConfigError& e) {
    return e.path();
  }
  return "<accepted>";
}

std::string minimal(const std::string& extra = "") {
  return R"({"problem": {"Q": [[2, 1], [1, 2]], "q": [-3, -3], "partition": [1, 1]},
            "channels": {"all": {"rate": 5}})" +
         extra + "}";
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("jumpflow_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& file) {
  std::ifstream in(file);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, PresetsRoundTrip) {
  for (const auto& name : preset_names()) {
    const auto cfg = preset(name);
    EXPECT_EQ(parse_config(dump_config(cfg)), cfg) << name;
    EXPECT_EQ(dump_config(parse_config(dump_config(cfg))), dump_config(cfg)) << name;
  }
  EXPECT_THROW(preset("nope"), ConfigError);
}

TEST(Config, ShippedFilesMatchPresets) {
  for (const auto& name : preset_names()) {
    const auto file = std::filesystem::path(JUMPFLOW_SOURCE_DIR) / "configs" / (name + ".json");
    EXPECT_EQ(load_config(file), preset(name)) << file;
  }
}

TEST(Config, MinimalConfigGetsDefaults) {
  const auto cfg = parse_config(minimal());
  EXPECT_EQ(cfg.solver.h, 0.01);
  EXPECT_EQ(cfg.solver.T, 10.0);
  EXPECT_EQ(cfg.ensemble.N, 100u);
  EXPECT_EQ(cfg.initial_state.v0, 1.5);
  ASSERT_TRUE(cfg.all_channels.has_value());
  EXPECT_EQ(cfg.all_channels->rate, 5.0);
}

TEST(Config, ErrorsNameTheField) {
  EXPECT_EQ(path_of_error(minimal(R"(, "solver": {"h": -1})")), "solver");
  EXPECT_EQ(path_of_error(minimal(R"(, "solver": {"step": 0.1})")), "solver.step");
  EXPECT_EQ(path_of_error(minimal(R"(, "ensemble": {"N": 0})")), "ensemble.N");
  EXPECT_EQ(path_of_error(minimal(R"(, "analysis": {"beta_target": 5})")), "analysis.beta_target");
  EXPECT_EQ(path_of_error(minimal(R"(, "analysis": {"rho": -1})")), "analysis.rho");
  EXPECT_EQ(path_of_error(minimal(R"(, "analysis": {"rate_method": "magic"})")), "analysis.rate_method");
  EXPECT_EQ(path_of_error(minimal(R"(, "rate_sweep": [1, 0])")), "rate_sweep[1]");
  EXPECT_EQ(path_of_error(R"({"channels": []})"), "problem");
  EXPECT_EQ(path_of_error("{not json"), "<root>");
  EXPECT_EQ(path_of_error(R"({"problem": {"Q": [[1, 2], [0, 1]], "q": [0, 0], "partition": [1, 1]},
                             "channels": {"all": {"rate": 1}}})"),
            "problem");
}

TEST(Config, BetaAtTwiceLambdaMinIsRejected) {
  auto cfg = preset("experiment1");
  const double lmin = make_problem(cfg).min_eigenvalue();
  cfg.analysis.beta_target = 2.0 * lmin;
  EXPECT_THROW(parse_config(dump_config(cfg)), ConfigError);
  cfg.analysis.beta_target = 1.9 * lmin;
  EXPECT_NO_THROW(parse_config(dump_config(cfg)));
}

TEST(Config, InfinityRho) {
  const auto cfg = parse_config(minimal(R"(, "analysis": {"rho": "inf"})"));
  EXPECT_TRUE(std::isinf(*cfg.analysis.rho));
  EXPECT_NE(dump_config(cfg).find("\"inf\""), std::string::npos);
}

TEST(Config, ExplicitChannelListUsesOneBasedEdges) {
  const auto cfg = parse_config(R"({"problem": {"Q": [[2, 1], [1, 2]], "q": [-3, -3], "partition": [1, 1]},
    "channels": [{"edge": [2, 1], "rate": 4}, {"edge": [1, 2], "rate": 3, "drift": 0.5}]})");
  const auto p = make_problem(cfg);
  const auto specs = make_channels(cfg, p);
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[0].edge, (Edge{0, 1}));
  EXPECT_EQ(specs[0].rate, 3.0);
  EXPECT_EQ(specs[1].edge, (Edge{1, 0}));
  EXPECT_EQ(make_channels(cfg, p, 9.0)[1].rate, 9.0);
  EXPECT_THROW(parse_config(R"({"problem": {"Q": [[2, 1], [1, 2]], "q": [-3, -3], "partition": [1, 1]},
    "channels": [{"edge": [1, 2], "rate": 3}]})"),
               ConfigError);
}

TEST(Config, InitialStateIsSynchronizedOnTheV0Sphere) {
  const auto cfg = preset("experiment1");
  const auto p = make_problem(cfg);
  const Vector x0 = make_initial_state(cfg, p);
  ASSERT_EQ(x0.size(), 18);
  EXPECT_NEAR((x0.head(6) - p.optimal_solution()).squaredNorm(), 1.5, 1e-12);
}

TEST(Certify, SingleAgentNote) {
  const auto cert = certify(preset("nominal"));
  EXPECT_NE(cert.note.find("no channels"), std::string::npos);
  std::ostringstream out;
  write_certificate_text(out, preset("nominal"), cert);
  EXPECT_NE(out.str().find("nominal rate"), std::string::npos);
}

TEST(Certify, RhoFromGamma) {
  auto cfg = preset("experiment2");
  cfg.analysis.rho.reset();
  cfg.analysis.gamma = 0.5;
  const auto p = make_problem(cfg);
  const auto rho = resolve_rho(cfg, p);
  // (n − 1)‖y*‖² / (λ_min γ)
  const double expected = 2.0 * p.optimal_solution().squaredNorm() / (p.min_eigenvalue() * 0.5);
  EXPECT_NEAR(rho.front(), expected, 1e-12 * expected);
}

TEST(Certify, KeyValueOutput) {
  const auto cfg = preset("experiment1");
  std::ostringstream out;
  write_certificate_kv(out, certify(cfg));
  EXPECT_NE(out.str().find("lambda_s="), std::string::npos);
  EXPECT_NE(out.str().find("method=published"), std::string::npos);
}

TEST(Run, NominalWritesOutputs) {
  const auto dir = scratch("nominal");
  const auto report = run_experiment(preset("nominal"), dir);
  ASSERT_EQ(report.runs.size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(dir / "trajectories.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "certificate.txt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "certificate.kv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "summary.txt"));
  const auto csv = slurp(dir / "trajectories.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,mean,band_low,band_high,sem_low,sem_high,reference");
  // Gradient flow: V(t) <= V(0)e^{−2λ_min t}.
  const auto& s = report.runs[0].stats;
  const double lmin = make_problem(preset("nominal")).min_eigenvalue();
  for (std::size_t k = 0; k < s.grid.size(); ++k) {
    EXPECT_LE(s.mean[k], s.mean[0] * std::exp(-2.0 * lmin * s.grid[k]) * (1.0 + 1e-12));
  }
  std::filesystem::remove_all(dir);
}

TEST(Run, SweepWritesOneCsvPerRate) {
  auto cfg = preset("experiment1");
  cfg.ensemble.N = 4;
  cfg.solver.T = 1.0;
  cfg.analysis.fit_window = std::array<double, 2>{0.1, 0.9};
  const auto dir = scratch("sweep");
  const auto report = run_experiment(cfg, dir);
  ASSERT_EQ(report.runs.size(), 3u);
  for (const auto& run : report.runs) {
    EXPECT_TRUE(std::filesystem::exists(run.csv)) << run.csv;
    EXPECT_EQ(run.stats.n_paths, 4u);
  }
  EXPECT_NE(slurp(dir / "summary.txt").find("rate"), std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST(Run, SeedOverrideChangesPaths) {
  auto cfg = preset("experiment2");
  cfg.ensemble.N = 8;
  cfg.solver.T = 1.0;
  const auto a = simulate_ensemble(cfg, 26.0);
  cfg.ensemble.master_seed += 1;
  const auto b = simulate_ensemble(cfg, 26.0);
  EXPECT_EQ(a.mean.front(), b.mean.front());
  EXPECT_NE(a.mean.back(), b.mean.back());
}

TEST(Run, Experiment2SettlesBelowStart) {
  const auto cfg = preset("experiment2");
  const auto stats = simulate_ensemble(cfg, 51.0);
  const double plateau = plateau_level(stats, 0.2);
  EXPECT_GT(plateau, 0.0);
  EXPECT_LT(plateau, stats.mean.front());
  for (double v : stats.mean) EXPECT_TRUE(std::isfinite(v));
}
