#include "jumpflow/stability.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jumpflow/errors.hpp"
#include "jumpflow/linalg.hpp"

namespace jumpflow {

namespace {

struct ChannelTable {
  NetworkLayout layout;
  std::vector<ChannelSpec> channels;
};

ChannelTable make_table(const QuadraticProblem& problem, std::span<const ChannelSpec> channels) {
  auto sorted = canonical_channels(problem, {channels.begin(), channels.end()});
  return {NetworkLayout(problem, Topology::complete(problem.agents())), std::move(sorted)};
}

void check_rho(const RhoWeights& rho, std::size_t agents) {
  if (rho.size() != agents) throw InvalidArgument("need one rho weight per agent");
  for (double r : rho) {
    if (!(r > 0.0)) throw InvalidArgument("rho weights must be positive");
  }
}

// −2a − ρa²; the Young term drops out when ρ = ∞ (y* = 0) or a = 0.
double r_diagonal(double a, double rho) {
  if (a == 0.0) return 0.0;
  if (std::isinf(rho)) return -2.0 * a;
  return -2.0 * a - rho * a * a;
}

Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

void check_square_symmetric(const Matrix& m, const char* name) {
  if (m.rows() != m.cols()) throw InvalidArgument(std::string(name) + " must be square");
  if (!linalg::is_symmetric(m, 1e-10)) throw InvalidArgument(std::string(name) + " must be symmetric");
}

Matrix schur_k(const Matrix& m11, const Matrix& m12) {
  Eigen::LLT<Matrix> llt(symmetrized(m11));
  if (llt.info() != Eigen::Success) throw InvalidArgument("M11 must be positive definite");
  return symmetrized(m12.transpose() * llt.solve(m12));
}

void check_schur_shapes(const Matrix& m11, const Matrix& m12, const Matrix& r) {
  check_square_symmetric(m11, "M11");
  check_square_symmetric(r, "R");
  if (m12.rows() != m11.rows() || m12.cols() != r.rows()) {
    throw InvalidArgument("M12 must be (rows of M11) x (rows of R)");
  }
  if (r.rows() == 0) throw InvalidArgument("rate block must be non-empty");
}

}  // namespace

LyapunovParams LyapunovParams::make(double c1, double c2, double c3, double gamma_prime) {
  if (!(c1 > 0.0) || !(c2 >= c1)) throw InvalidArgument("need 0 < c1 <= c2");
  if (!(c3 > 0.0)) throw InvalidArgument("c3 must be positive");
  if (!(gamma_prime >= 0.0)) throw InvalidArgument("gamma' must be nonnegative");
  return {c1, c2, c3, gamma_prime};
}

double lyapunov_V(const ErrorCoordinates& s) {
  double v = s.x_tilde.squaredNorm();
  for (const auto& e : s.e) v += e.squaredNorm();
  return v;
}

double lyapunov_V(const NetworkLayout& layout, const Vector& y_star, const Vector& stacked_state) {
  double v = (stacked_state.head(layout.agent_dim()) - y_star).squaredNorm();
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    const std::size_t j = layout.edges()[c].sender;
    v += (stacked_state.segment(layout.agent_offset(j), layout.agent_size(j)) -
          stacked_state.segment(layout.channel_offset(c), layout.channel_size(c)))
             .squaredNorm();
  }
  return v;
}

double lyapunov_V_error(const NetworkLayout& layout, const Vector& stacked_error_state) {
  return lyapunov_V(layout, Vector::Zero(layout.agent_dim()), stacked_error_state);
}

GeneratorTerms generator_terms(const QuadraticProblem& problem,
                               std::span<const ChannelSpec> channels, const ErrorCoordinates& s,
                               double t, const Vector& y_star) {
  const auto table = make_table(problem, channels);
  const auto& layout = table.layout;
  if (s.e.size() != layout.channel_count() ||
      static_cast<std::size_t>(s.x_tilde.size()) != layout.agent_dim()) {
    throw InvalidArgument("error coordinates do not match the problem");
  }
  const Vector& x = s.x_tilde;
  const Vector qx = problem.Q() * x;
  auto seg = [&](const Vector& v, std::size_t agent) {
    return v.segment(layout.agent_offset(agent), layout.agent_size(agent));
  };

  GeneratorTerms w;
  w.w1 = -2.0 * x.dot(qx);
  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    const auto [j, i] = layout.edges()[c];
    const Vector& e = s.e[c];
    const double a = table.channels[c].drift(t);
    const double rate = table.channels[c].rate;
    w.w2 += e.dot(problem.block(j, i) * seg(x, i));
    for (std::size_t c2 : layout.inbound(j)) {
      const std::size_t k = layout.edges()[c2].sender;
      w.w3 += 2.0 * e.dot(problem.block(j, k) * s.e[c2]);
    }
    w.w4 -= e.dot(seg(qx, j));
    w.w5 -= a * e.dot(seg(x, j));
    w.w6 += (2.0 * a - rate) * e.squaredNorm();
    w.w7 -= 2.0 * a * e.dot(seg(y_star, j));
  }
  return w;
}

double generator_LV(const QuadraticProblem& problem, std::span<const ChannelSpec> channels,
                    const ErrorCoordinates& s, double t, const Vector& y_star) {
  return generator_terms(problem, channels, s, t, y_star).total();
}

RhoWeights uniform_rho(std::size_t agents, double rho) { return RhoWeights(agents, rho); }

Matrix MAssembly::full() const {
  const auto d = M11.rows();
  const auto e = R.rows();
  Matrix m(d + e, d + e);
  m.topLeftCorner(d, d) = M11;
  m.topRightCorner(d, e) = M21.transpose();
  m.bottomLeftCorner(e, d) = M21;
  m.bottomRightCorner(e, e) = Lambda + R;
  return m;
}

MAssembly assemble_M_with_drift(const QuadraticProblem& problem,
                                std::span<const ChannelSpec> channels, const RhoWeights& rho,
                                std::span<const double> drift_values, RCoupling coupling) {
  const auto table = make_table(problem, channels);
  const auto& layout = table.layout;
  check_rho(rho, problem.agents());
  if (drift_values.size() != layout.channel_count()) {
    throw InvalidArgument("need one drift value per channel");
  }
  // drift_values follow the caller's channel order; map them to edge order.
  std::vector<double> a(layout.channel_count());
  for (std::size_t n = 0; n < channels.size(); ++n) {
    a[*layout.channel_index(channels[n].edge)] = drift_values[n];
  }

  const auto d = static_cast<Eigen::Index>(layout.agent_dim());
  const auto E = static_cast<Eigen::Index>(layout.error_dim());
  MAssembly m;
  m.rho = rho;
  m.M11 = 2.0 * problem.Q();
  m.M21 = Matrix::Zero(E, d);
  m.Lambda = Matrix::Zero(E, E);
  m.R = Matrix::Zero(E, E);

  for (std::size_t c = 0; c < layout.channel_count(); ++c) {
    const auto [j, i] = layout.edges()[c];
    const auto row = static_cast<Eigen::Index>(layout.error_offset(c));
    const auto dj = static_cast<Eigen::Index>(layout.channel_size(c));
    for (std::size_t k = 0; k < layout.agents(); ++k) {
      Matrix blk = problem.block(j, k);
      if (k == i) blk -= problem.block(j, i);
      if (k == j) blk.diagonal().array() += a[c];
      m.M21.block(row, static_cast<Eigen::Index>(layout.agent_offset(k)), dj, blk.cols()) = blk;
    }
    m.Lambda.block(row, row, dj, dj).diagonal().setConstant(table.channels[c].rate);
    m.R.block(row, row, dj, dj).diagonal().setConstant(r_diagonal(a[c], rho[j]));

    for (std::size_t c2 = 0; c2 < layout.channel_count(); ++c2) {
      if (c2 == c) continue;
      const auto [p, q] = layout.edges()[c2];
      double weight = 0.0;
      if (coupling == RCoupling::kDerived) {
        weight = (q == j ? 1.0 : 0.0) + (p == i ? 1.0 : 0.0);
      } else if (i == q && j != p) {
        weight = 2.0;
      }
      if (weight == 0.0) continue;
      const auto col = static_cast<Eigen::Index>(layout.error_offset(c2));
      m.R.block(row, col, dj, static_cast<Eigen::Index>(layout.channel_size(c2))) =
          -weight * problem.block(j, p);
    }
  }
  return m;
}

MAssembly assemble_M(const QuadraticProblem& problem, std::span<const ChannelSpec> channels,
                     const RhoWeights& rho, double t, RCoupling coupling) {
  std::vector<double> a;
  a.reserve(channels.size());
  for (const auto& spec : channels) a.push_back(spec.drift(t));
  return assemble_M_with_drift(problem, channels, rho, a, coupling);
}

double gamma_prime(const QuadraticProblem& problem, std::span<const ChannelSpec> channels,
                   const RhoWeights& rho, const Vector& y_star) {
  check_rho(rho, problem.agents());
  double total = 0.0;
  for (const auto& spec : channels) {
    if (spec.drift_bound == 0.0) continue;
    const std::size_t j = spec.edge.sender;
    if (std::isinf(rho.at(j))) continue;
    total += problem.segment(y_star, j).squaredNorm() / rho[j];
  }
  return total;
}

double generator_upper_bound(const QuadraticProblem& problem,
                             std::span<const ChannelSpec> channels, const ErrorCoordinates& s,
                             double t, const Vector& y_star, const RhoWeights& rho) {
  const NetworkLayout layout(problem, Topology::complete(problem.agents()));
  const Vector sv = stacked_s(layout, s);
  const Matrix m = assemble_M(problem, channels, rho, t).full();
  return -sv.dot(m * sv) + gamma_prime(problem, channels, rho, y_star);
}

RhoChoice choose_rho(const Vector& y_star, double c3, double gamma, std::size_t agents) {
  if (!(c3 > 0.0)) throw InvalidArgument("c3 must be positive");
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  const double mass = static_cast<double>(agents > 0 ? agents - 1 : 0) * y_star.squaredNorm();
  if (mass == 0.0) return {};
  const double rho = mass / (c3 * gamma);
  return {rho, mass / rho};
}

double schur_rate_lambda_s(const Matrix& m11, const Matrix& m12, const Matrix& r) {
  check_schur_shapes(m11, m12, r);
  return -linalg::min_eigenvalue(symmetrized(r) - schur_k(m11, m12));
}

double schur_rate_lambda_d(const Matrix& m11, const Matrix& m12, const Matrix& r, double mu) {
  check_schur_shapes(m11, m12, r);
  const double lmin = linalg::min_eigenvalue(m11);
  if (!(mu > 0.0 && mu < lmin)) {
    std::ostringstream msg;
    msg << "invalid mu " << mu << ": must lie in (0, lambda_min(M11)) = (0, " << lmin << ")";
    throw InvalidArgument(msg.str());
  }
  const Matrix shifted = m11 - mu * Matrix::Identity(m11.rows(), m11.cols());
  return mu - linalg::min_eigenvalue(symmetrized(r) - schur_k(shifted, m12));
}

std::string to_string(RateMethod method) {
  switch (method) {
    case RateMethod::kUniform: return "uniform";
    case RateMethod::kPiecewise: return "piecewise";
    case RateMethod::kPublished: return "published";
  }
  return "uniform";
}

RateMethod rate_method_from_string(const std::string& name) {
  if (name == "uniform") return RateMethod::kUniform;
  if (name == "piecewise") return RateMethod::kPiecewise;
  if (name == "published") return RateMethod::kPublished;
  throw InvalidArgument("unknown rate method '" + name + "' (uniform, piecewise, published)");
}

namespace {

// One representative time per constant piece of the combined schedules.
std::vector<double> piece_representatives(std::span<const ChannelSpec> channels) {
  std::vector<double> times{std::numeric_limits<double>::lowest()};
  for (const auto& spec : channels) {
    const auto& b = spec.drift.breakpoints();
    times.insert(times.end(), b.begin(), b.end());
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

}  // namespace

RateCertificate theorem_rates(const QuadraticProblem& problem,
                              std::span<const ChannelSpec> channels, const RhoWeights& rho,
                              std::optional<double> beta, RateMethod method) {
  RateCertificate cert;
  cert.method = method;
  cert.channels = channels.size();
  cert.lambda_min_Q = problem.min_eigenvalue();
  cert.beta_target = beta;
  cert.rho = rho;
  if (beta) {
    const double upper = 2.0 * cert.lambda_min_Q;
    if (!(*beta > 0.0 && *beta < upper)) {
      std::ostringstream msg;
      msg << "beta_target " << *beta << " must lie in the open interval (0, 2*lambda_min(Q)) = (0, "
          << upper << ")";
      throw InvalidArgument(msg.str());
    }
  }
  if (channels.empty()) {
    if (problem.agents() != 1) throw AssemblyError("multi-agent problem without channels");
    if (beta) cert.lambda_d = 0.0;
    return cert;
  }
  const auto table = make_table(problem, channels);
  check_rho(rho, problem.agents());
  const auto& chans = table.channels;
  const Vector y_star = problem.optimal_solution();
  cert.gamma_prime = gamma_prime(problem, chans, rho, y_star);

  std::vector<double> bounds, zeros(chans.size(), 0.0);
  for (const auto& spec : chans) {
    bounds.push_back(spec.drift_bound);
    cert.a_max = std::max(cert.a_max, spec.drift_bound);
  }

  // Uniform bound: worst case of −2a − ρa² on [−a_ji, a_ji] sits at +a_ji.
  const MAssembly worst = assemble_M_with_drift(problem, chans, rho, bounds);
  cert.R_const = worst.R;
  cert.m21_const_norm = linalg::spectral_norm(assemble_M_with_drift(problem, chans, rho, zeros).M21);
  const double coupling = std::pow(cert.m21_const_norm + cert.a_max, 2);
  const auto E = cert.R_const.rows();
  const Matrix I = Matrix::Identity(E, E);
  cert.K_bound = coupling / (2.0 * cert.lambda_min_Q);
  cert.lambda_s_uniform = -linalg::min_eigenvalue(cert.R_const - cert.K_bound * I);
  std::optional<double> lambda_d_uniform;
  if (beta) {
    cert.K_bound_beta = coupling / (2.0 * cert.lambda_min_Q - *beta);
    lambda_d_uniform = *beta - linalg::min_eigenvalue(cert.R_const - *cert.K_bound_beta * I);
  }

  // Piecewise: M(t) takes finitely many values, so the sup over t is a max.
  double lambda_s_piece = -std::numeric_limits<double>::infinity();
  double lambda_d_piece = -std::numeric_limits<double>::infinity();
  for (double t : piece_representatives(chans)) {
    const MAssembly m = assemble_M(problem, chans, rho, t);
    const Matrix m12 = m.M21.transpose();
    lambda_s_piece = std::max(lambda_s_piece, schur_rate_lambda_s(m.M11, m12, m.R));
    if (beta) lambda_d_piece = std::max(lambda_d_piece, schur_rate_lambda_d(m.M11, m12, m.R, *beta));
  }
  cert.lambda_s_piecewise = lambda_s_piece;

  const MAssembly published =
      assemble_M_with_drift(problem, chans, rho, bounds, RCoupling::kSharedReceiver);
  cert.lambda_s_published =
      schur_rate_lambda_s(problem.Q(), published.M21.transpose(), published.R);

  switch (method) {
    case RateMethod::kUniform:
      cert.lambda_s = cert.lambda_s_uniform;
      cert.lambda_d = lambda_d_uniform;
      break;
    case RateMethod::kPiecewise:
      cert.lambda_s = cert.lambda_s_piecewise;
      if (beta) cert.lambda_d = lambda_d_piece;
      break;
    case RateMethod::kPublished:
      // The published recipe has no decay-rate counterpart.
      cert.lambda_s = cert.lambda_s_published;
      if (beta) cert.lambda_d = lambda_d_piece;
      break;
  }
  return cert;
}

Lemma1Report verify_lemma1_bound(std::span<const double> grid, std::span<const double> mean,
                                 std::span<const double> standard_error,
                                 const LyapunovParams& params, double s0_norm2, double t0,
                                 double slack_sigmas) {
  if (grid.size() != mean.size() ||
      (!standard_error.empty() && standard_error.size() != grid.size())) {
    throw InvalidArgument("grid, mean and standard error must have equal length");
  }
  Lemma1Report report;
  report.max_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double bound =
        params.alpha() * s0_norm2 * std::exp(-params.beta() * (grid[k] - t0)) + params.gamma();
    const double slack = standard_error.empty() ? 0.0 : slack_sigmas * standard_error[k];
    const double excess = mean[k] - bound - slack;
    report.max_excess = std::max(report.max_excess, excess);
    if (excess > 0.0 && report.holds) {
      report.holds = false;
      report.first_violation = grid[k];
    }
  }
  return report;
}

}  // namespace jumpflow
