#pragma once

// Seeded ensembles of jump-system paths and statistics of a scalar functional
// (usually V) on the common output grid.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "jumpflow/jump_sde.hpp"

namespace jumpflow {

struct EnsembleConfig {
  std::size_t n_paths = 100;
  PathConfig path;  ///< path.seed is ignored; path k uses derive_seed(master_seed, k)
  std::uint64_t master_seed = 0;
  std::size_t threads = 1;  ///< 0 picks std::thread::hardware_concurrency()
  bool keep_paths = false;  ///< keep per-path values for CSV output
  JumpTiming timing = JumpTiming::kExact;

  void validate() const;
  std::uint64_t path_seed(std::size_t k) const;
};

/// Scalar recorded at each grid point, e.g. V.
using Functional = std::function<double(const State&)>;

/// mean(√f(T)) <= √mean(f(T)), the first-moment consequence of a second
/// moment bound. With f = V = ‖s‖² this is E‖s‖ <= (E‖s‖²)^½.
struct JensenCheck {
  bool applicable = false;  ///< false when some f(T) < 0
  double mean_root = 0.0;
  double root_mean = 0.0;
  bool holds = true;
};

struct EnsembleStats {
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> band_low;   ///< 2.5th percentile across paths
  std::vector<double> band_high;  ///< 97.5th percentile across paths
  std::vector<double> sem;        ///< standard error of the mean
  std::vector<double> min;
  std::vector<double> max;
  std::size_t n_paths = 0;
  /// paths[k][g], only with keep_paths.
  std::vector<std::vector<double>> paths;
  JensenCheck jensen;
};

/// Runs config.n_paths independent paths from x0. Results do not depend on
/// the thread count. A diverging path aborts the run with PathDiverged.
EnsembleStats run_ensemble(const JumpSystem& system, const State& x0, const Functional& f,
                           const EnsembleConfig& config);

/// Empirical quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and non-empty.
double quantile_sorted(const std::vector<double>& sorted, double p);

/// Statistics of an already recorded value matrix values[path][grid].
EnsembleStats summarize(std::vector<double> grid, const std::vector<std::vector<double>>& values,
                        bool keep_paths = false);

/// −slope of the least-squares line through ln V̄ on [t_begin, t_end].
double fit_decay_rate(const EnsembleStats& stats, double t_begin, double t_end);

/// Mean of V̄ over the trailing tail_fraction of the grid.
double plateau_level(const EnsembleStats& stats, double tail_fraction);

struct CsvOptions {
  bool sem_columns = false;  ///< mean ± 1.96·sem
  bool path_columns = false;
  /// Optional extra column evaluated at each grid time.
  std::optional<std::function<double(double)>> reference;
  std::string reference_name = "reference";
};

std::vector<std::string> csv_header(const CsvOptions& options, std::size_t n_paths);

/// t,mean,band_low,band_high[,sem_low,sem_high][,reference][,path_0,...]
void write_csv(std::ostream& out, const EnsembleStats& stats, const CsvOptions& options = {});

}  // namespace jumpflow
