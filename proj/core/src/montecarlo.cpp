#include "jumpflow/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "jumpflow/errors.hpp"
#include "jumpflow/random.hpp"

namespace jumpflow {

void EnsembleConfig::validate() const {
  if (n_paths == 0) throw InvalidArgument("ensemble needs at least one path");
  path.validate();
}

std::uint64_t EnsembleConfig::path_seed(std::size_t k) const { return derive_seed(master_seed, k); }

double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

EnsembleStats summarize(std::vector<double> grid, const std::vector<std::vector<double>>& values,
                        bool keep_paths) {
  if (values.empty()) throw InvalidArgument("no paths to summarize");
  const std::size_t n = values.size();
  const std::size_t g = grid.size();
  for (const auto& row : values) {
    if (row.size() != g) throw InvalidArgument("every path must cover the whole grid");
  }

  EnsembleStats stats;
  stats.grid = std::move(grid);
  stats.n_paths = n;
  for (auto* v : {&stats.mean, &stats.band_low, &stats.band_high, &stats.sem, &stats.min,
                  &stats.max}) {
    v->resize(g);
  }

  std::vector<double> column(n);
  for (std::size_t t = 0; t < g; ++t) {
    // Shifted by the first sample so identical values give an exact mean.
    const double shift = values[0][t];
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      column[k] = values[k][t];
      sum += column[k] - shift;
    }
    const double mean = shift + sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : column) ss += (v - mean) * (v - mean);
    std::sort(column.begin(), column.end());
    stats.mean[t] = mean;
    stats.sem[t] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    stats.band_low[t] = quantile_sorted(column, 0.025);
    stats.band_high[t] = quantile_sorted(column, 0.975);
    stats.min[t] = column.front();
    stats.max[t] = column.back();
  }

  if (g > 0) {
    const bool nonneg = std::all_of(values.begin(), values.end(),
                                    [](const auto& row) { return row.back() >= 0.0; });
    if (nonneg) {
      double roots = 0.0;
      for (const auto& row : values) roots += std::sqrt(row.back());
      stats.jensen.applicable = true;
      stats.jensen.mean_root = roots / static_cast<double>(n);
      stats.jensen.root_mean = std::sqrt(stats.mean.back());
      // Allow for rounding in the two sums.
      stats.jensen.holds =
          stats.jensen.mean_root <= stats.jensen.root_mean * (1.0 + 1e-12) + 1e-300;
    }
  }
  if (keep_paths) stats.paths = values;
  return stats;
}

EnsembleStats run_ensemble(const JumpSystem& system, const State& x0, const Functional& f,
                           const EnsembleConfig& config) {
  config.validate();
  if (!f) throw InvalidArgument("no functional to record");
  const std::vector<double> grid = config.path.grid();
  std::vector<std::vector<double>> values(config.n_paths, std::vector<double>(grid.size()));

  struct Failure {
    std::size_t path;
    double time;
    std::string what;
  };
  std::vector<Failure> failures;
  std::exception_ptr other_error;
  std::mutex failure_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  auto worker = [&] {
    for (;;) {
      if (abort.load()) return;
      const std::size_t k = next.fetch_add(1);
      if (k >= config.n_paths) return;
      try {
        PathConfig pc = config.path;
        pc.seed = config.path_seed(k);
        const auto streams = sample_event_streams(system.rates, pc.t0, pc.horizon, pc.seed);
        auto& row = values[k];
        integrate(
            system, streams, pc, x0,
            [&](std::size_t index, double, const State& x) { row[index] = f(x); },
            config.timing);
      } catch (const NumericalDivergence& e) {
        std::lock_guard lock(failure_mutex);
        failures.push_back({k, e.time(), e.what()});
        abort = true;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!other_error) other_error = std::current_exception();
        abort = true;
      }
    }
  };

  std::size_t threads = config.threads == 0 ? std::thread::hardware_concurrency() : config.threads;
  threads = std::clamp<std::size_t>(threads, 1, config.n_paths);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  if (other_error) std::rethrow_exception(other_error);
  if (!failures.empty()) {
    const auto first = std::min_element(failures.begin(), failures.end(),
                                        [](const auto& a, const auto& b) { return a.path < b.path; });
    std::ostringstream msg;
    msg << "path " << first->path << " diverged: " << first->what;
    throw PathDiverged(msg.str(), first->time, first->path);
  }

  EnsembleStats stats = summarize(grid, values, config.keep_paths);
  if (stats.jensen.applicable && !stats.jensen.holds) {
    throw std::logic_error("first-moment inequality violated on the empirical measure");
  }
  return stats;
}

double fit_decay_rate(const EnsembleStats& stats, double t_begin, double t_end) {
  if (!(t_end > t_begin)) throw InvalidArgument("fit window must have t_end > t_begin");
  double n = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < stats.grid.size(); ++k) {
    const double t = stats.grid[k];
    if (t < t_begin || t > t_end) continue;
    if (!(stats.mean[k] > 0.0)) {
      std::ostringstream msg;
      msg << "mean is not positive at t = " << t << "; cannot fit a log-linear decay";
      throw InvalidArgument(msg.str());
    }
    const double y = std::log(stats.mean[k]);
    n += 1.0;
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
  }
  if (n < 2.0) throw InvalidArgument("fit window contains fewer than two grid points");
  const double denom = n * sxx - sx * sx;
  return -(n * sxy - sx * sy) / denom;
}

double plateau_level(const EnsembleStats& stats, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction < 1.0)) {
    throw InvalidArgument("tail fraction must lie in (0, 1)");
  }
  const std::size_t g = stats.mean.size();
  if (g == 0) throw InvalidArgument("empty statistics");
  const auto count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(g))));
  double sum = 0.0;
  for (std::size_t k = g - count; k < g; ++k) sum += stats.mean[k];
  return sum / static_cast<double>(count);
}

std::vector<std::string> csv_header(const CsvOptions& options, std::size_t n_paths) {
  std::vector<std::string> cols{"t", "mean", "band_low", "band_high"};
  if (options.sem_columns) {
    cols.emplace_back("sem_low");
    cols.emplace_back("sem_high");
  }
  if (options.reference) cols.push_back(options.reference_name);
  if (options.path_columns) {
    for (std::size_t k = 0; k < n_paths; ++k) cols.push_back("path_" + std::to_string(k));
  }
  return cols;
}

void write_csv(std::ostream& out, const EnsembleStats& stats, const CsvOptions& options) {
  if (options.path_columns && stats.paths.size() != stats.n_paths) {
    throw InvalidArgument("path columns requested but per-path values were not kept");
  }
  const auto header = csv_header(options, stats.n_paths);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';

  const auto old_precision = out.precision(std::numeric_limits<double>::max_digits10);
  for (std::size_t k = 0; k < stats.grid.size(); ++k) {
    out << stats.grid[k] << ',' << stats.mean[k] << ',' << stats.band_low[k] << ','
        << stats.band_high[k];
    if (options.sem_columns) {
      out << ',' << stats.mean[k] - 1.96 * stats.sem[k] << ',' << stats.mean[k] + 1.96 * stats.sem[k];
    }
    if (options.reference) out << ',' << (*options.reference)(stats.grid[k]);
    if (options.path_columns) {
      for (const auto& path : stats.paths) out << ',' << path[k];
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace jumpflow
