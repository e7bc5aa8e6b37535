#include "jumpflow/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "jumpflow/distributed_gd.hpp"
#include "jumpflow/errors.hpp"
#include "jumpflow/linalg.hpp"

namespace jumpflow {

using json = nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t k) {
  return path + "[" + std::to_string(k) + "]";
}

void reject_unknown(const json& obj, const std::string& path, std::set<std::string> allowed) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(join(path, key), "unknown field");
  }
}

const json& object_at(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  return j;
}

bool present(const json& obj, const std::string& key) {
  return obj.contains(key) && !obj.at(key).is_null();
}

double as_double(const json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
  }
  throw ConfigError(path, "expected a number");
}

double finite_double(const json& j, const std::string& path) {
  const double v = as_double(j, path);
  if (!std::isfinite(v)) throw ConfigError(path, "expected a finite number");
  return v;
}

std::uint64_t as_u64(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() && j.get<std::int64_t>() < 0)) {
    throw ConfigError(path, "expected a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
  return j.get<bool>();
}

std::vector<double> as_vector(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(finite_double(j[k], index_path(path, k)));
  return out;
}

DriftSchedule parse_drift(const json& j, const std::string& path) {
  if (j.is_number()) return DriftSchedule(finite_double(j, path));
  if (!j.is_object()) throw ConfigError(path, "expected a number or {breakpoints, values}");
  reject_unknown(j, path, {"breakpoints", "values"});
  if (!j.contains("values")) throw ConfigError(join(path, "values"), "missing");
  auto breakpoints = j.contains("breakpoints") ? as_vector(j.at("breakpoints"), join(path, "breakpoints"))
                                               : std::vector<double>{};
  auto values = as_vector(j.at("values"), join(path, "values"));
  try {
    return DriftSchedule(std::move(breakpoints), std::move(values));
  } catch (const InvalidArgument& e) {
    throw ConfigError(path, e.what());
  }
}

json dump_drift(const DriftSchedule& drift) {
  if (drift.is_constant()) return drift.values().front();
  return json{{"breakpoints", drift.breakpoints()}, {"values", drift.values()}};
}

json optional_number(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "inf" : "-inf";
  return *v;
}

std::string timing_name(JumpTiming timing) {
  return timing == JumpTiming::kExact ? "exact" : "grid";
}

ProblemConfig parse_problem(const json& j, const std::string& path) {
  object_at(j, path);
  reject_unknown(j, path, {"Q", "q", "partition"});
  ProblemConfig p;
  for (const char* key : {"Q", "q", "partition"}) {
    if (!j.contains(key)) throw ConfigError(join(path, key), "missing");
  }
  const auto& rows = j.at("Q");
  if (!rows.is_array() || rows.empty()) throw ConfigError(join(path, "Q"), "expected nested arrays");
  for (std::size_t r = 0; r < rows.size(); ++r) {
    p.Q.push_back(as_vector(rows[r], index_path(join(path, "Q"), r)));
  }
  p.q = as_vector(j.at("q"), join(path, "q"));
  const auto& part = j.at("partition");
  if (!part.is_array()) throw ConfigError(join(path, "partition"), "expected an array");
  for (std::size_t k = 0; k < part.size(); ++k) {
    p.partition.push_back(as_u64(part[k], index_path(join(path, "partition"), k)));
  }
  return p;
}

std::optional<double> optional_bound(const json& j, const std::string& path) {
  if (!present(j, "drift_bound")) return std::nullopt;
  return finite_double(j.at("drift_bound"), join(path, "drift_bound"));
}

void parse_channels(const json& j, const std::string& path, ExperimentConfig& cfg) {
  if (j.is_null()) return;
  if (j.is_object()) {
    reject_unknown(j, path, {"all"});
    if (!j.contains("all")) throw ConfigError(join(path, "all"), "missing");
    const std::string p = join(path, "all");
    const auto& a = object_at(j.at("all"), p);
    reject_unknown(a, p, {"rate", "drift", "drift_bound"});
    if (!a.contains("rate")) throw ConfigError(join(p, "rate"), "missing");
    UniformChannelConfig u;
    u.rate = finite_double(a.at("rate"), join(p, "rate"));
    if (present(a, "drift")) u.drift = parse_drift(a.at("drift"), join(p, "drift"));
    u.drift_bound = optional_bound(a, p);
    cfg.all_channels = u;
    return;
  }
  if (!j.is_array()) throw ConfigError(path, "expected a list of channels or {\"all\": {...}}");
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string p = index_path(path, k);
    const auto& c = object_at(j[k], p);
    reject_unknown(c, p, {"edge", "rate", "drift", "drift_bound"});
    for (const char* key : {"edge", "rate"}) {
      if (!c.contains(key)) throw ConfigError(join(p, key), "missing");
    }
    const auto& e = c.at("edge");
    if (!e.is_array() || e.size() != 2) throw ConfigError(join(p, "edge"), "expected [sender, receiver]");
    ChannelConfig ch;
    ch.edge = {as_u64(e[0], join(p, "edge[0]")), as_u64(e[1], join(p, "edge[1]"))};
    ch.rate = finite_double(c.at("rate"), join(p, "rate"));
    if (present(c, "drift")) ch.drift = parse_drift(c.at("drift"), join(p, "drift"));
    ch.drift_bound = optional_bound(c, p);
    cfg.channels.push_back(std::move(ch));
  }
}

void parse_solver(const json& j, const std::string& path, SolverConfig& s) {
  object_at(j, path);
  reject_unknown(j, path, {"h", "T", "t0", "jump_timing"});
  if (present(j, "h")) s.h = finite_double(j.at("h"), join(path, "h"));
  if (present(j, "T")) s.T = finite_double(j.at("T"), join(path, "T"));
  if (present(j, "t0")) s.t0 = finite_double(j.at("t0"), join(path, "t0"));
  if (present(j, "jump_timing")) {
    const auto& t = j.at("jump_timing");
    const std::string name = t.is_string() ? t.get<std::string>() : "";
    if (name == "exact") {
      s.timing = JumpTiming::kExact;
    } else if (name == "grid") {
      s.timing = JumpTiming::kGrid;
    } else {
      throw ConfigError(join(path, "jump_timing"), "expected \"exact\" or \"grid\"");
    }
  }
}

void parse_ensemble(const json& j, const std::string& path, EnsembleSettings& e) {
  object_at(j, path);
  reject_unknown(j, path, {"N", "master_seed", "threads"});
  if (present(j, "N")) e.N = as_u64(j.at("N"), join(path, "N"));
  if (present(j, "master_seed")) e.master_seed = as_u64(j.at("master_seed"), join(path, "master_seed"));
  if (present(j, "threads")) e.threads = as_u64(j.at("threads"), join(path, "threads"));
}

void parse_analysis(const json& j, const std::string& path, AnalysisConfig& a) {
  object_at(j, path);
  reject_unknown(j, path,
                 {"gamma", "beta_target", "rho", "rate_method", "fit_window", "tail_fraction"});
  if (present(j, "gamma")) a.gamma = finite_double(j.at("gamma"), join(path, "gamma"));
  if (present(j, "beta_target")) {
    a.beta_target = finite_double(j.at("beta_target"), join(path, "beta_target"));
  }
  if (present(j, "rho")) {
    const auto& r = j.at("rho");
    if (r.is_array()) {
      std::vector<double> w;
      for (std::size_t k = 0; k < r.size(); ++k) w.push_back(as_double(r[k], index_path(join(path, "rho"), k)));
      a.rho_per_agent = std::move(w);
    } else {
      a.rho = as_double(r, join(path, "rho"));
    }
  }
  if (present(j, "rate_method")) {
    const auto& m = j.at("rate_method");
    try {
      a.rate_method = rate_method_from_string(m.is_string() ? m.get<std::string>() : "");
    } catch (const InvalidArgument& e) {
      throw ConfigError(join(path, "rate_method"), e.what());
    }
  }
  if (present(j, "fit_window")) {
    const auto w = as_vector(j.at("fit_window"), join(path, "fit_window"));
    if (w.size() != 2) throw ConfigError(join(path, "fit_window"), "expected [t_begin, t_end]");
    a.fit_window = std::array<double, 2>{w[0], w[1]};
  }
  if (present(j, "tail_fraction")) {
    a.tail_fraction = finite_double(j.at("tail_fraction"), join(path, "tail_fraction"));
  }
}

void parse_initial_state(const json& j, const std::string& path, InitialStateConfig& s) {
  if (j.is_string()) {
    if (j.get<std::string>() != "default") throw ConfigError(path, "expected \"default\" or an object");
    return;
  }
  object_at(j, path);
  reject_unknown(j, path, {"v0", "x0", "z0"});
  if (present(j, "v0")) s.v0 = finite_double(j.at("v0"), join(path, "v0"));
  if (present(j, "x0")) s.x0 = as_vector(j.at("x0"), join(path, "x0"));
  if (present(j, "z0")) s.z0 = as_vector(j.at("z0"), join(path, "z0"));
}

void parse_output(const json& j, const std::string& path, OutputConfig& o) {
  object_at(j, path);
  reject_unknown(j, path, {"sem_columns", "path_columns", "reference"});
  if (present(j, "sem_columns")) o.sem_columns = as_bool(j.at("sem_columns"), join(path, "sem_columns"));
  if (present(j, "path_columns")) o.path_columns = as_bool(j.at("path_columns"), join(path, "path_columns"));
  if (present(j, "reference")) o.reference = as_bool(j.at("reference"), join(path, "reference"));
}

// Semantic checks that need the assembled objects.
void validate(const ExperimentConfig& cfg) {
  const QuadraticProblem problem = make_problem(cfg);
  if (cfg.all_channels && !cfg.channels.empty()) {
    throw ConfigError("channels", "give either a channel list or {\"all\": ...}, not both");
  }
  for (std::size_t k = 0; k < cfg.rate_sweep.size(); ++k) {
    if (!(cfg.rate_sweep[k] > 0.0)) throw ConfigError(index_path("rate_sweep", k), "rates must be positive");
  }
  (void)make_channels(cfg, problem);

  const auto& s = cfg.solver;
  try {
    PathConfig{s.t0, s.T, s.h, 0}.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("solver", e.what());
  }
  if (cfg.ensemble.N == 0) throw ConfigError("ensemble.N", "must be positive");

  const auto& a = cfg.analysis;
  if (a.gamma && !(*a.gamma > 0.0)) throw ConfigError("analysis.gamma", "must be positive");
  if (a.beta_target) {
    const double upper = 2.0 * problem.min_eigenvalue();
    if (!(*a.beta_target > 0.0 && *a.beta_target < upper)) {
      std::ostringstream msg;
      msg << "must lie in the open interval (0, 2*lambda_min(Q)) = (0, " << upper << ")";
      throw ConfigError("analysis.beta_target", msg.str());
    }
  }
  if (a.rho && !(*a.rho > 0.0)) throw ConfigError("analysis.rho", "must be positive");
  if (a.rho_per_agent) {
    if (a.rho_per_agent->size() != problem.agents()) {
      throw ConfigError("analysis.rho", "need one weight per agent");
    }
    for (double r : *a.rho_per_agent) {
      if (!(r > 0.0)) throw ConfigError("analysis.rho", "weights must be positive");
    }
  }
  if (a.fit_window && !((*a.fit_window)[1] > (*a.fit_window)[0])) {
    throw ConfigError("analysis.fit_window", "need t_begin < t_end");
  }
  if (!(a.tail_fraction > 0.0 && a.tail_fraction < 1.0)) {
    throw ConfigError("analysis.tail_fraction", "must lie in (0, 1)");
  }
  if (!(cfg.initial_state.v0 >= 0.0)) throw ConfigError("initial_state.v0", "must be nonnegative");
  (void)make_initial_state(cfg, problem);
}

double initial_V(const ExperimentConfig& cfg, const QuadraticProblem& problem, const Vector& y_star) {
  const NetworkLayout layout(problem, Topology::complete(problem.agents()));
  return lyapunov_V(layout, y_star, make_initial_state(cfg, problem));
}

std::string format_vector(const Vector& v) {
  std::ostringstream out;
  out << std::setprecision(10) << "(";
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    // Round-off below this level is noise from the solve.
    out << (k ? ", " : "") << (std::abs(v[k]) < 1e-12 ? 0.0 : v[k]);
  }
  out << ")";
  return out.str();
}

std::string format_rho(const RhoWeights& rho) {
  std::ostringstream out;
  out << std::setprecision(10);
  const bool uniform = std::all_of(rho.begin(), rho.end(), [&](double r) { return r == rho.front(); });
  if (uniform && !rho.empty()) {
    out << rho.front();
  } else {
    for (std::size_t k = 0; k < rho.size(); ++k) out << (k ? " " : "") << rho[k];
  }
  return out.str();
}

std::array<double, 2> fit_window(const ExperimentConfig& cfg) {
  if (cfg.analysis.fit_window) return *cfg.analysis.fit_window;
  const double span = cfg.solver.T - cfg.solver.t0;
  return {cfg.solver.t0 + 0.1 * span, cfg.solver.t0 + 0.8 * span};
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("<root>", "expected an object");
  reject_unknown(root, "", {"name", "problem", "channels", "rate_sweep", "solver", "ensemble",
                            "analysis", "initial_state", "output"});

  ExperimentConfig cfg;
  if (present(root, "name")) {
    if (!root.at("name").is_string()) throw ConfigError("name", "expected a string");
    cfg.name = root.at("name").get<std::string>();
  }
  if (!root.contains("problem")) throw ConfigError("problem", "missing");
  cfg.problem = parse_problem(root.at("problem"), "problem");
  if (root.contains("channels")) parse_channels(root.at("channels"), "channels", cfg);
  if (present(root, "rate_sweep")) cfg.rate_sweep = as_vector(root.at("rate_sweep"), "rate_sweep");
  if (present(root, "solver")) parse_solver(root.at("solver"), "solver", cfg.solver);
  if (present(root, "ensemble")) parse_ensemble(root.at("ensemble"), "ensemble", cfg.ensemble);
  if (present(root, "analysis")) parse_analysis(root.at("analysis"), "analysis", cfg.analysis);
  if (present(root, "initial_state")) {
    parse_initial_state(root.at("initial_state"), "initial_state", cfg.initial_state);
  }
  if (present(root, "output")) parse_output(root.at("output"), "output", cfg.output);
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("<file>", "cannot read " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
  json root;
  root["name"] = cfg.name;
  root["problem"] = {{"Q", cfg.problem.Q}, {"q", cfg.problem.q}, {"partition", cfg.problem.partition}};
  auto bound = [](const std::optional<double>& b) { return optional_number(b); };
  if (cfg.all_channels) {
    const auto& u = *cfg.all_channels;
    root["channels"] = {{"all", {{"rate", u.rate}, {"drift", dump_drift(u.drift)}, {"drift_bound", bound(u.drift_bound)}}}};
  } else {
    json list = json::array();
    for (const auto& c : cfg.channels) {
      list.push_back({{"edge", c.edge}, {"rate", c.rate}, {"drift", dump_drift(c.drift)},
                      {"drift_bound", bound(c.drift_bound)}});
    }
    root["channels"] = list;
  }
  root["rate_sweep"] = cfg.rate_sweep;
  root["solver"] = {{"h", cfg.solver.h}, {"T", cfg.solver.T}, {"t0", cfg.solver.t0},
                    {"jump_timing", timing_name(cfg.solver.timing)}};
  root["ensemble"] = {{"N", cfg.ensemble.N}, {"master_seed", cfg.ensemble.master_seed},
                      {"threads", cfg.ensemble.threads}};
  const auto& a = cfg.analysis;
  json rho = optional_number(a.rho);
  if (a.rho_per_agent) {
    rho = json::array();
    for (double r : *a.rho_per_agent) rho.push_back(optional_number(r));
  }
  root["analysis"] = {{"gamma", optional_number(a.gamma)},
                      {"beta_target", optional_number(a.beta_target)},
                      {"rho", rho},
                      {"rate_method", to_string(a.rate_method)},
                      {"fit_window", a.fit_window ? json(*a.fit_window) : json(nullptr)},
                      {"tail_fraction", a.tail_fraction}};
  const auto& s = cfg.initial_state;
  root["initial_state"] = {{"v0", s.v0},
                           {"x0", s.x0 ? json(*s.x0) : json(nullptr)},
                           {"z0", s.z0 ? json(*s.z0) : json(nullptr)}};
  root["output"] = {{"sem_columns", cfg.output.sem_columns},
                    {"path_columns", cfg.output.path_columns},
                    {"reference", cfg.output.reference}};
  return root.dump(2) + "\n";
}

ProblemConfig reference_problem() {
  ProblemConfig p;
  p.Q = {{4, 2, 1, 1, 0, 2}, {2, 5, 2, 0, 2, 1}, {1, 2, 6, 3, 1, 0},
         {1, 0, 3, 4, 2, 1}, {0, 2, 1, 2, 5, 2}, {2, 1, 0, 1, 2, 4}};
  p.q = {-9, -15, -22, -12, -10, -5};
  p.partition = {3, 2, 1};
  return p;
}

std::vector<std::string> preset_names() { return {"nominal", "experiment1", "experiment2"}; }

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.name = name;
  cfg.problem = reference_problem();
  cfg.solver = {0.01, 10.0, 0.0, JumpTiming::kExact};
  cfg.ensemble = {100, 20240601, 0};
  if (name == "nominal") {
    cfg.problem.partition = {6};
    cfg.ensemble.N = 1;
    cfg.output.reference = true;
  } else if (name == "experiment1") {
    cfg.all_channels = UniformChannelConfig{50.0, 0.0, 0.0};
    cfg.rate_sweep = {10.0, 27.0, 50.0};
    cfg.analysis.rate_method = RateMethod::kPublished;
    cfg.analysis.fit_window = std::array<double, 2>{1.0, 8.0};
    cfg.output.reference = true;
  } else if (name == "experiment2") {
    cfg.all_channels = UniformChannelConfig{51.0, 1.0, 1.0};
    cfg.rate_sweep = {26.0, 51.0};
    cfg.analysis.rho = 1.0;
    cfg.analysis.rate_method = RateMethod::kPublished;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("preset", "unknown preset '" + name + "' (known: " + known + ")");
  }
  return cfg;
}

QuadraticProblem make_problem(const ExperimentConfig& cfg) {
  const auto& p = cfg.problem;
  const std::size_t d = p.Q.size();
  Matrix Q(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    if (p.Q[r].size() != d) {
      throw ConfigError(index_path("problem.Q", r), "Q must be square (" + std::to_string(d) + " columns)");
    }
    for (std::size_t c = 0; c < d; ++c) Q(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = p.Q[r][c];
  }
  if (p.q.size() != d) throw ConfigError("problem.q", "length must match Q");
  try {
    return QuadraticProblem(Q, Eigen::Map<const Vector>(p.q.data(), static_cast<Eigen::Index>(d)),
                            p.partition);
  } catch (const InvalidArgument& e) {
    throw ConfigError("problem", e.what());
  }
}

std::vector<ChannelSpec> make_channels(const ExperimentConfig& cfg, const QuadraticProblem& problem,
                                       std::optional<double> rate) {
  std::vector<ChannelSpec> specs;
  auto spec_for = [&](Edge edge, double r, const DriftSchedule& drift,
                      const std::optional<double>& bound) {
    ChannelSpec s = ChannelSpec::make(edge, rate.value_or(r), drift);
    if (bound) s.drift_bound = *bound;
    return s;
  };
  if (cfg.all_channels) {
    const Topology complete = Topology::complete(problem.agents());
    for (const Edge& e : complete.edges()) {
      specs.push_back(spec_for(e, cfg.all_channels->rate, cfg.all_channels->drift,
                               cfg.all_channels->drift_bound));
    }
  } else {
    for (std::size_t k = 0; k < cfg.channels.size(); ++k) {
      const auto& c = cfg.channels[k];
      if (c.edge[0] < 1 || c.edge[1] < 1 || c.edge[0] > problem.agents() ||
          c.edge[1] > problem.agents()) {
        throw ConfigError(index_path("channels", k) + ".edge",
                          "agent indices must lie in 1.." + std::to_string(problem.agents()));
      }
      specs.push_back(spec_for({c.edge[0] - 1, c.edge[1] - 1}, c.rate, c.drift, c.drift_bound));
    }
  }
  try {
    return canonical_channels(problem, std::move(specs));
  } catch (const std::exception& e) {
    throw ConfigError("channels", e.what());
  }
}

Vector make_initial_state(const ExperimentConfig& cfg, const QuadraticProblem& problem) {
  const NetworkLayout layout(problem, Topology::complete(problem.agents()));
  const auto& s = cfg.initial_state;
  NetworkState state;
  if (s.x0) {
    if (s.x0->size() != problem.dim()) throw ConfigError("initial_state.x0", "length must equal dim(Q)");
    state = synchronized_state(layout, Eigen::Map<const Vector>(s.x0->data(), static_cast<Eigen::Index>(s.x0->size())));
  } else {
    state = default_initial_state(layout, problem.optimal_solution(), s.v0);
  }
  Vector x = stack(layout, state);
  if (s.z0) {
    const std::size_t n = layout.total_dim() - layout.agent_dim();
    if (s.z0->size() != n) {
      throw ConfigError("initial_state.z0", "length must equal the total channel dimension " + std::to_string(n));
    }
    x.tail(static_cast<Eigen::Index>(n)) = Eigen::Map<const Vector>(s.z0->data(), static_cast<Eigen::Index>(n));
  }
  return x;
}

RhoWeights resolve_rho(const ExperimentConfig& cfg, const QuadraticProblem& problem) {
  const auto& a = cfg.analysis;
  if (a.rho_per_agent) return *a.rho_per_agent;
  if (a.rho) return uniform_rho(problem.agents(), *a.rho);
  const Vector y_star = problem.optimal_solution();
  const double gamma = a.gamma.value_or(0.01 * initial_V(cfg, problem, y_star));
  const double c3 = a.beta_target.value_or(problem.min_eigenvalue());
  if (!(gamma > 0.0)) return uniform_rho(problem.agents(), std::numeric_limits<double>::infinity());
  return uniform_rho(problem.agents(), choose_rho(y_star, c3, gamma, problem.agents()).rho);
}

Certificate certify(const ExperimentConfig& cfg) {
  const QuadraticProblem problem = make_problem(cfg);
  const auto rate = cfg.rate_sweep.empty() ? std::nullopt : std::optional<double>(cfg.rate_sweep.front());
  const auto channels = make_channels(cfg, problem, rate);
  Certificate cert;
  cert.y_star = problem.optimal_solution();
  cert.rates = theorem_rates(problem, channels, resolve_rho(cfg, problem), cfg.analysis.beta_target,
                             cfg.analysis.rate_method);
  if (channels.empty()) {
    std::ostringstream note;
    note << std::setprecision(10) << "no channels; nominal rate 2λ_min(Q) = " << cert.rates.nominal_rate();
    cert.note = note.str();
  } else if (cfg.analysis.rate_method == RateMethod::kPublished && cert.rates.lambda_d) {
    cert.note = "lambda_d taken from the piecewise method";
  }
  return cert;
}

void write_certificate_text(std::ostream& out, const ExperimentConfig& cfg, const Certificate& cert) {
  const auto& r = cert.rates;
  out << std::setprecision(8);
  out << "Rate certificate: " << cfg.name << "\n\n";
  out << "  agents              " << cfg.problem.partition.size() << "\n";
  out << "  channels            " << r.channels << "\n";
  out << "  lambda_min(Q)       " << r.lambda_min_Q << "\n";
  out << "  nominal rate        " << r.nominal_rate() << "  (2 lambda_min(Q))\n";
  out << "  y*                  " << format_vector(cert.y_star) << "\n";
  if (!cert.note.empty()) out << "  note                " << cert.note << "\n";
  if (r.channels == 0) return;
  out << "\n  method              " << to_string(r.method) << "\n";
  out << "  lambda_s            " << r.lambda_s << "\n";
  if (r.beta_target) out << "  beta_target         " << *r.beta_target << "\n";
  if (r.lambda_d) out << "  lambda_d            " << *r.lambda_d << "\n";
  out << "\n  lambda_s by method\n";
  out << "    uniform           " << r.lambda_s_uniform << "\n";
  out << "    piecewise         " << r.lambda_s_piecewise << "\n";
  out << "    published         " << r.lambda_s_published << "\n";
  out << "\n  ingredients\n";
  out << "    ||M21,c||_2       " << r.m21_const_norm << "\n";
  out << "    a_max             " << r.a_max << "\n";
  out << "    K_bound           " << r.K_bound << "\n";
  if (r.K_bound_beta) out << "    K_bound,beta      " << *r.K_bound_beta << "\n";
  out << "    rho               " << format_rho(r.rho) << "\n";
  out << "    gamma'            " << r.gamma_prime << "\n";
  out << "    lambda_min(R)     " << linalg::min_eigenvalue(r.R_const) << "\n";
}

void write_certificate_kv(std::ostream& out, const Certificate& cert) {
  const auto& r = cert.rates;
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) s << std::setprecision(17) << *v;
    return s.str();
  };
  out << std::setprecision(17);
  out << "channels=" << r.channels << "\n";
  out << "lambda_min_Q=" << r.lambda_min_Q << "\n";
  out << "nominal_rate=" << r.nominal_rate() << "\n";
  out << "y_star=";
  for (Eigen::Index k = 0; k < cert.y_star.size(); ++k) out << (k ? "," : "") << cert.y_star[k];
  out << "\n";
  out << "method=" << to_string(r.method) << "\n";
  out << "lambda_s=" << r.lambda_s << "\n";
  out << "lambda_d=" << opt(r.lambda_d) << "\n";
  out << "beta_target=" << opt(r.beta_target) << "\n";
  out << "lambda_s_uniform=" << r.lambda_s_uniform << "\n";
  out << "lambda_s_piecewise=" << r.lambda_s_piecewise << "\n";
  out << "lambda_s_published=" << r.lambda_s_published << "\n";
  out << "m21_const_norm=" << r.m21_const_norm << "\n";
  out << "a_max=" << r.a_max << "\n";
  out << "K_bound=" << r.K_bound << "\n";
  out << "K_bound_beta=" << opt(r.K_bound_beta) << "\n";
  out << "rho=" << format_rho(r.rho) << "\n";
  out << "gamma_prime=" << r.gamma_prime << "\n";
  out << "note=" << cert.note << "\n";
}

EnsembleStats simulate_ensemble(const ExperimentConfig& cfg, std::optional<double> rate,
                                bool keep_paths) {
  const QuadraticProblem problem = make_problem(cfg);
  const Vector y_star = problem.optimal_solution();
  const auto sys = assemble_distributed_system(problem, make_channels(cfg, problem, rate));
  const Vector x0 = make_initial_state(cfg, problem);

  EnsembleConfig ec;
  ec.n_paths = cfg.ensemble.N;
  ec.path = PathConfig{cfg.solver.t0, cfg.solver.T, cfg.solver.h, 0};
  ec.master_seed = cfg.ensemble.master_seed;
  ec.threads = cfg.ensemble.threads;
  ec.keep_paths = keep_paths;
  ec.timing = cfg.solver.timing;
  const NetworkLayout& layout = sys.layout;
  return run_ensemble(sys.system, x0,
                      [&layout, &y_star](const State& x) { return lyapunov_V(layout, y_star, x); }, ec);
}

RunReport run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  RunReport report;
  report.certificate = certify(cfg);
  {
    std::ofstream txt(out_dir / "certificate.txt");
    write_certificate_text(txt, cfg, report.certificate);
    std::ofstream kv(out_dir / "certificate.kv");
    write_certificate_kv(kv, report.certificate);
  }

  const QuadraticProblem problem = make_problem(cfg);
  const double v0 = initial_V(cfg, problem, report.certificate.y_star);
  const double nominal = 2.0 * problem.min_eigenvalue();
  const double t0 = cfg.solver.t0;
  CsvOptions csv;
  csv.sem_columns = cfg.output.sem_columns;
  csv.path_columns = cfg.output.path_columns;
  if (cfg.output.reference) {
    csv.reference = [v0, nominal, t0](double t) { return v0 * std::exp(-nominal * (t - t0)); };
  }
  const auto window = fit_window(cfg);

  std::vector<std::optional<double>> rates;
  for (double r : cfg.rate_sweep) rates.emplace_back(r);
  if (rates.empty()) rates.emplace_back(std::nullopt);

  for (const auto& rate : rates) {
    RunOutcome outcome;
    outcome.rate = rate;
    outcome.stats = simulate_ensemble(cfg, rate, cfg.output.path_columns);
    std::ostringstream file;
    file << "trajectories";
    if (rate) file << "_rate_" << *rate;
    file << ".csv";
    outcome.csv = out_dir / file.str();
    std::ofstream out(outcome.csv);
    write_csv(out, outcome.stats, csv);
    outcome.beta_hat = fit_decay_rate(outcome.stats, window[0], window[1]);
    outcome.plateau = plateau_level(outcome.stats, cfg.analysis.tail_fraction);
    report.runs.push_back(std::move(outcome));
  }

  std::ofstream summary(out_dir / "summary.txt");
  const auto& r = report.certificate.rates;
  summary << std::setprecision(8);
  summary << "experiment      " << cfg.name << "\n";
  summary << "lambda_min(Q)   " << r.lambda_min_Q << "\n";
  summary << "y*              " << format_vector(report.certificate.y_star) << "\n";
  if (r.channels > 0) {
    summary << "lambda_s        " << r.lambda_s << "  (" << to_string(r.method) << ")\n";
  } else {
    summary << "lambda_s        n/a  (" << report.certificate.note << ")\n";
  }
  if (r.lambda_d) summary << "lambda_d        " << *r.lambda_d << "  (beta = " << *r.beta_target << ")\n";
  summary << "paths           " << cfg.ensemble.N << "  (master seed " << cfg.ensemble.master_seed << ")\n";
  summary << "fit window      [" << window[0] << ", " << window[1] << "]\n";
  summary << "tail fraction   " << cfg.analysis.tail_fraction << "\n\n";
  summary << std::left;
  for (const char* h : {"rate", "V(0)", "V(T)", "beta_hat", "plateau", "E|s(T)|"}) {
    summary << std::setw(16) << h;
  }
  summary << "sqrt(E|s(T)|^2)\n";
  for (const auto& run : report.runs) {
    const auto& s = run.stats;
    summary << std::setw(16);
    if (run.rate) {
      summary << *run.rate;
    } else {
      summary << "-";
    }
    for (double v : {s.mean.front(), s.mean.back(), run.beta_hat, run.plateau, s.jensen.mean_root,
                     s.jensen.root_mean}) {
      summary << std::setw(16) << v;
    }
    summary << "\n";
  }
  summary << std::right;
  return report;
}

}  // namespace jumpflow
