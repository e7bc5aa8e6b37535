#pragma once

// Lyapunov analysis of the distributed flow in error coordinates s = (x̃, e).
//
// V(s) = ‖s‖², and the generator splits into the terms W1..W7 below. Bounding
// the cross term W7 with Young's inequality gives
//
//   ℒV(s) <= −sᵀ M(t) s + γ′,   M = [[M11, M21ᵀ], [M21, Λ + R]],
//
// and positive definiteness of M is certified through the Schur complement of
// M11 = 2Q. The resulting sufficient rates are λ_s (stability) and λ_d
// (stability with a prescribed decay rate β).

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jumpflow/channels.hpp"
#include "jumpflow/distributed_gd.hpp"
#include "jumpflow/quadratic_problem.hpp"

namespace jumpflow {

/// Constants of the mean-square Lyapunov theorem:
/// c1‖s‖² <= V <= c2‖s‖² and ℒV <= −c3‖s‖² + γ′ give
/// E‖s(t)‖² <= α‖s0‖² e^{−β(t−t0)} + γ.
struct LyapunovParams {
  double c1 = 1.0;
  double c2 = 1.0;
  double c3 = 1.0;
  double gamma_prime = 0.0;

  static LyapunovParams make(double c1, double c2, double c3, double gamma_prime);

  double alpha() const { return c2 / c1; }
  double beta() const { return c3 / c2; }
  double gamma() const { return gamma_prime / c3; }
};

double lyapunov_V(const ErrorCoordinates& s);
/// V evaluated on a stacked state of the original system.
double lyapunov_V(const NetworkLayout& layout, const Vector& y_star, const Vector& stacked_state);
/// V evaluated on a stacked state (x̃, z̃) of the error system.
double lyapunov_V_error(const NetworkLayout& layout, const Vector& stacked_error_state);

/// Exact generator, term by term; total() = W1 + 2W2 + W3 + 2W4 + 2W5 + W6 + W7.
struct GeneratorTerms {
  double w1 = 0, w2 = 0, w3 = 0, w4 = 0, w5 = 0, w6 = 0, w7 = 0;
  double total() const { return w1 + 2 * w2 + w3 + 2 * w4 + 2 * w5 + w6 + w7; }
};

GeneratorTerms generator_terms(const QuadraticProblem& problem,
                               std::span<const ChannelSpec> channels, const ErrorCoordinates& s,
                               double t, const Vector& y_star);

double generator_LV(const QuadraticProblem& problem, std::span<const ChannelSpec> channels,
                    const ErrorCoordinates& s, double t, const Vector& y_star);

/// Off-diagonal coupling used for the e-e block R.
enum class RCoupling {
  /// Collected from W3: edge (j,i) couples to every edge (k,j) through −Q_jk
  /// (doubled for reciprocal pairs). This is the form that bounds ℒV.
  kDerived,
  /// −2Q_jp between edges (j,i), (p,i) sharing a receiver. Only used by the
  /// published rate recipe.
  kSharedReceiver,
};

/// ρ_j > 0 per sender agent. +∞ disables the Young term (allowed when y* = 0).
using RhoWeights = std::vector<double>;

RhoWeights uniform_rho(std::size_t agents, double rho);

/// M(t) in blocks. Rows of M21 and of Λ, R are indexed by channels in layout
/// edge order (height d_sender), columns of M21 by agents.
struct MAssembly {
  Matrix M11;
  Matrix M21;
  Matrix Lambda;
  Matrix R;
  RhoWeights rho;

  Matrix M22() const { return Lambda + R; }
  Matrix full() const;
};

MAssembly assemble_M(const QuadraticProblem& problem, std::span<const ChannelSpec> channels,
                     const RhoWeights& rho, double t, RCoupling coupling = RCoupling::kDerived);

/// Same blocks with explicit per-channel drift values a_c instead of a(t).
MAssembly assemble_M_with_drift(const QuadraticProblem& problem,
                                std::span<const ChannelSpec> channels, const RhoWeights& rho,
                                std::span<const double> drift_values,
                                RCoupling coupling = RCoupling::kDerived);

/// γ′ = Σ_(j,i) (1/ρ_j)‖y*_j‖² over channels whose drift bound is nonzero.
double gamma_prime(const QuadraticProblem& problem, std::span<const ChannelSpec> channels,
                   const RhoWeights& rho, const Vector& y_star);

/// −sᵀM(t)s + γ′ with M built from the actual rates and a(t).
double generator_upper_bound(const QuadraticProblem& problem,
                             std::span<const ChannelSpec> channels, const ErrorCoordinates& s,
                             double t, const Vector& y_star, const RhoWeights& rho);

struct RhoChoice {
  double rho = std::numeric_limits<double>::infinity();
  double gamma_prime = 0.0;
};

/// Smallest uniform ρ with (n−1)‖y*‖²/ρ <= c3·γ. y* = 0 gives ρ = +∞, γ′ = 0.
RhoChoice choose_rho(const Vector& y_star, double c3, double gamma, std::size_t agents);

/// λ_s = −λ_min(R − M12ᵀ M11⁻¹ M12). Any diagonal Λ > λ_s makes
/// [[M11, M12], [M12ᵀ, Λ + R]] positive definite.
double schur_rate_lambda_s(const Matrix& m11, const Matrix& m12, const Matrix& r);

/// λ_d = μ − λ_min(R − M12ᵀ (M11 − μI)⁻¹ M12) for 0 < μ < λ_min(M11).
/// Any diagonal Λ >= λ_d gives M ⪰ μI.
double schur_rate_lambda_d(const Matrix& m11, const Matrix& m12, const Matrix& r, double mu);

enum class RateMethod {
  /// Constant worst-case R and norm bounds on K; valid for any drift within
  /// the bounds a_ji.
  kUniform,
  /// Exact Schur complement on every constant piece of the drift schedules.
  kPiecewise,
  /// Reproduces the reported reference values: shared-receiver R, drift
  /// frozen at +a_ji and K = M21 Q⁻¹ M21ᵀ. λ_d falls back to kPiecewise.
  kPublished,
};

std::string to_string(RateMethod method);
RateMethod rate_method_from_string(const std::string& name);

struct RateCertificate {
  RateMethod method = RateMethod::kUniform;
  std::size_t channels = 0;
  double lambda_min_Q = 0.0;
  double lambda_s = 0.0;
  std::optional<double> lambda_d;
  std::optional<double> beta_target;

  // Ingredients of the uniform bound.
  double m21_const_norm = 0.0;  ///< ‖M21,c‖₂
  double a_max = 0.0;
  double K_bound = 0.0;
  std::optional<double> K_bound_beta;
  Matrix R_const;
  RhoWeights rho;
  double gamma_prime = 0.0;

  // λ_s under each method, for side-by-side reporting.
  double lambda_s_uniform = 0.0;
  double lambda_s_piecewise = 0.0;
  double lambda_s_published = 0.0;

  double nominal_rate() const { return 2.0 * lambda_min_Q; }
};

/// Sufficient constant rates. β, when given, must lie in (0, 2λ_min(Q)).
RateCertificate theorem_rates(const QuadraticProblem& problem,
                              std::span<const ChannelSpec> channels, const RhoWeights& rho,
                              std::optional<double> beta = std::nullopt,
                              RateMethod method = RateMethod::kUniform);

struct Lemma1Report {
  bool holds = true;
  std::optional<double> first_violation;
  double max_excess = 0.0;  ///< max of V̄ − bound − slack (<= 0 when it holds)
};

/// Checks V̄(t) <= α‖s0‖² e^{−β(t−t0)} + γ + slack_sigmas·sem(t) pointwise.
Lemma1Report verify_lemma1_bound(std::span<const double> grid, std::span<const double> mean,
                                 std::span<const double> standard_error,
                                 const LyapunovParams& params, double s0_norm2, double t0,
                                 double slack_sigmas = 3.0);

}  // namespace jumpflow
