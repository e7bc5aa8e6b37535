#pragma once

// Experiment configuration (JSON), presets, certificates and end-to-end runs.
//
// Config files use 1-based agent indices for channel edges; everything inside
// the library is 0-based.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "jumpflow/channels.hpp"
#include "jumpflow/jump_sde.hpp"
#include "jumpflow/montecarlo.hpp"
#include "jumpflow/quadratic_problem.hpp"
#include "jumpflow/stability.hpp"

namespace jumpflow {

struct ProblemConfig {
  std::vector<std::vector<double>> Q;  ///< row-major
  std::vector<double> q;
  std::vector<std::size_t> partition;
  bool operator==(const ProblemConfig&) const = default;
};

struct ChannelConfig {
  std::array<std::size_t, 2> edge{1, 2};  ///< (sender, receiver), 1-based
  double rate = 1.0;
  DriftSchedule drift;
  std::optional<double> drift_bound;  ///< defaults to sup |a|
  bool operator==(const ChannelConfig&) const = default;
};

/// The same channel parameters on every edge of the complete graph.
struct UniformChannelConfig {
  double rate = 1.0;
  DriftSchedule drift;
  std::optional<double> drift_bound;
  bool operator==(const UniformChannelConfig&) const = default;
};

struct SolverConfig {
  double h = 0.01;
  double T = 10.0;
  double t0 = 0.0;
  JumpTiming timing = JumpTiming::kExact;
  bool operator==(const SolverConfig&) const = default;
};

struct EnsembleSettings {
  std::size_t N = 100;
  std::uint64_t master_seed = 1;
  std::size_t threads = 0;
  bool operator==(const EnsembleSettings&) const = default;
};

struct AnalysisConfig {
  std::optional<double> gamma;        ///< ultimate bound; default 0.01·V(0)
  std::optional<double> beta_target;  ///< β for λ_d
  std::optional<double> rho;          ///< uniform ρ; +∞ allowed
  std::optional<std::vector<double>> rho_per_agent;
  RateMethod rate_method = RateMethod::kUniform;
  std::optional<std::array<double, 2>> fit_window;  ///< default [0.1T, 0.8T]
  double tail_fraction = 0.2;
  bool operator==(const AnalysisConfig&) const = default;
};

struct InitialStateConfig {
  double v0 = 1.5;                        ///< used when x0 is absent
  std::optional<std::vector<double>> x0;  ///< agent states, stacked
  std::optional<std::vector<double>> z0;  ///< channel states in edge order; default x_j
  bool operator==(const InitialStateConfig&) const = default;
};

struct OutputConfig {
  bool sem_columns = true;
  bool path_columns = false;
  bool reference = false;  ///< V(0)·e^{−2λ_min(Q)t}
  bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  ProblemConfig problem;
  std::optional<UniformChannelConfig> all_channels;
  std::vector<ChannelConfig> channels;
  std::vector<double> rate_sweep;  ///< one run per rate, overriding every channel
  SolverConfig solver;
  EnsembleSettings ensemble;
  AnalysisConfig analysis;
  InitialStateConfig initial_state;
  OutputConfig output;
  bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError naming the offending field path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& file);
/// Every field written out explicitly; parse_config(dump_config(c)) == c.
std::string dump_config(const ExperimentConfig& config);

std::vector<std::string> preset_names();
/// "nominal", "experiment1" or "experiment2"; ConfigError otherwise.
ExperimentConfig preset(const std::string& name);

/// Matrices of the built-in six-dimensional example.
ProblemConfig reference_problem();

QuadraticProblem make_problem(const ExperimentConfig& config);
/// Channel specs in layout edge order; `rate` replaces every channel's rate.
std::vector<ChannelSpec> make_channels(const ExperimentConfig& config,
                                       const QuadraticProblem& problem,
                                       std::optional<double> rate = std::nullopt);
/// Stacked initial state [x, z].
Vector make_initial_state(const ExperimentConfig& config, const QuadraticProblem& problem);

/// ρ from the config, else from γ via choose_rho (c3 = β, or λ_min(Q)).
RhoWeights resolve_rho(const ExperimentConfig& config, const QuadraticProblem& problem);

struct Certificate {
  RateCertificate rates;
  Vector y_star;
  std::string note;
};

Certificate certify(const ExperimentConfig& config);
void write_certificate_text(std::ostream& out, const ExperimentConfig& config,
                            const Certificate& cert);
void write_certificate_kv(std::ostream& out, const Certificate& cert);

struct RunOutcome {
  std::optional<double> rate;  ///< the sweep value, if any
  std::filesystem::path csv;
  EnsembleStats stats;
  double beta_hat = 0.0;
  double plateau = 0.0;
};

struct RunReport {
  Certificate certificate;
  std::vector<RunOutcome> runs;
};

/// Simulates every sweep entry and writes trajectories CSV(s), certificate.txt,
/// certificate.kv and summary.txt into `out_dir`.
RunReport run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// Simulation only, without touching the filesystem.
EnsembleStats simulate_ensemble(const ExperimentConfig& config, std::optional<double> rate,
                                bool keep_paths = false);

}  // namespace jumpflow
