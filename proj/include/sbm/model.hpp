// Problem definitions, oracle contracts, solver configuration and KKT
// diagnostics shared by the rest of the library.
//
// Internally the solver works on the normalized problem
//
//   minimize r(x)  subject to  c(x) = 0,  0 <= x <= x_u
//
// General bounds [l, u] are shifted at ingestion (see ProblemEvaluator).
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sbm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch between arguments.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A parameter set violates the orderings required by the algorithms.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The objective oracle returned a non-finite value or subgradient entry.
class OracleFailure : public Error {
 public:
  OracleFailure(const std::string& what, std::int64_t index)
      : Error(what), index_(index) {}
  /// Offending coordinate; -1 refers to the function value.
  std::int64_t index() const { return index_; }

 private:
  std::int64_t index_;
};

/// Numerical breakdown inside a QP solve.
class SolverBreakdown : public Error {
 public:
  using Error::Error;
};

/// Backtracking line search underflowed. Usually means the constraint
/// Hessian bound is violated.
class BacktrackExhausted : public Error {
 public:
  using Error::Error;
};

/// The penalty-parameter reduction loop did not terminate.
class LoopGuard : public Error {
 public:
  using Error::Error;
};

/// A second-stage (inner) solve failed.
class InnerSolveFailure : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Domain types

struct BoxBounds {
  Vector lower;
  Vector upper;

  Eigen::Index size() const { return lower.size(); }
  /// Throws ShapeError / ConfigError when lower_j < upper_j fails.
  void validate() const;
  bool contains(const Vector& x, double tol = 1e-12) const;
  Vector clamp(const Vector& x) const;
  /// Euclidean length of upper - lower.
  double diameter() const;
};

/// Value and one Clarke subgradient of the objective at a point.
struct OracleSample {
  double value = 0.0;
  Vector subgradient;
  std::string note;
};

/// c(x) and its m x n Jacobian (row j is the gradient of c_j).
struct ConstraintValues {
  Vector c;
  Matrix jacobian;
};

struct SmoothConstraints {
  int m = 0;
  std::function<ConstraintValues(const Vector&)> eval;
  /// H_u^c: (1/2) v' Hess c_j(x) v <= H_u^c |v|^2 for all j, x, v.
  double hessian_bound = 0.0;

  ConstraintValues evaluate(const Vector& x) const;
};

struct NonsmoothOracle {
  std::function<OracleSample(const Vector&)> eval;
  /// Constant C of r(x) - r(xb) - g'(x - xb) <= C |x - xb|^2, when known.
  std::optional<double> upper_c2_constant;
};

struct Problem {
  std::string name;
  BoxBounds box;
  NonsmoothOracle objective;
  SmoothConstraints constraints;

  Eigen::Index dimension() const { return box.size(); }
};

enum class AlphaStrategy { kFixedMultiplicative, kBarzilaiBorwein, kRatio, kDiagonal };

std::string to_string(AlphaStrategy s);
AlphaStrategy alpha_strategy_from_string(const std::string& s);

struct SolverConfig {
  // acceptance of the full trial step
  double eta_l_plus = 0.5;
  double eta_l_minus = 1.5;
  // line search / acceptance of the damped step
  double eta_beta = 0.1;
  double eta_gamma_plus = 0.5;
  double eta_gamma_minus = 1.5;
  // quadratic coefficient
  double eta_alpha = 2.0;
  double alpha0 = 1.0;
  double alpha_min = 1e-8;
  double alpha_max = 1e12;
  AlphaStrategy alpha_strategy = AlphaStrategy::kFixedMultiplicative;
  // decrease alpha after a very successful step
  bool alpha_decrease = true;
  double eta_u_plus = 0.9;
  // ratio rule: initial ratio eta_k
  double ratio_eta0 = 0.5;
  double ratio_eta_max = 0.99;
  // diagonal rule: multiplier on coordinates sitting at a bound
  double diagonal_boost = 10.0;
  // merit parameter
  double gamma = 1e-3;
  std::optional<double> theta0;  // defaults to gamma
  // consistency restoration
  double eta_pi = 0.5;
  double eta_f = 0.1;
  double eps_f = 1e-10;
  // termination
  double eps = 1e-8;
  int max_iters = 1000;
  // QP tolerance
  double qp_tol = 1e-10;

  double initial_theta() const { return theta0.value_or(gamma); }
  /// Throws ConfigError when any ordering required by the algorithms fails.
  void validate() const;
};

enum class StepKind { kSerious, kRejected, kRestorationSerious, kRestorationRejected };

std::string to_string(StepKind k);
bool is_restoration(StepKind k);
bool is_serious(StepKind k);

struct IterationRecord {
  int k = 0;
  StepKind step_kind = StepKind::kRejected;
  double r_value = 0.0;
  /// Merit at x_k under this iteration's parameter (theta_k, or 1/pi_k in
  /// restoration).
  double merit_value = 0.0;
  /// Same merit at the accepted point; NaN unless the step is serious.
  double merit_next = 0.0;
  /// |d_k| of the full subproblem step.
  double step_norm = 0.0;
  /// d' diag(alpha) d of the full subproblem step.
  double step_quadratic = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double theta = 0.0;
  std::optional<double> pi;
  double kkt_residual = 0.0;
  std::int64_t oracle_calls = 0;
  double delta = 0.0;
  double rho = 0.0;
  double rho_beta = 0.0;
};

// ---------------------------------------------------------------------------
// Evaluation

/// Wraps a Problem with the bound shift x = x' + lower and counts oracle calls.
/// All vectors passed in and out are in the shifted coordinates.
class ProblemEvaluator {
 public:
  explicit ProblemEvaluator(const Problem& problem);

  const Problem& problem() const { return *problem_; }
  Eigen::Index n() const { return upper_.size(); }
  int m() const { return problem_->constraints.m; }
  /// x_u of the normalized box [0, x_u].
  const Vector& upper() const { return upper_; }

  Vector to_shifted(const Vector& x) const;
  Vector to_original(const Vector& x_shifted) const;

  OracleSample objective(const Vector& x_shifted);
  ConstraintValues constraints(const Vector& x_shifted) const;
  std::int64_t oracle_calls() const { return calls_; }

 private:
  const Problem* problem_;
  Vector upper_;
  std::int64_t calls_ = 0;
};

/// Checked oracle call: bounds (1e-12 absolute), finiteness and dimension.
/// Increments `counter` when provided.
OracleSample evaluate_objective(const NonsmoothOracle& oracle, const Vector& x,
                                const BoxBounds& box, std::int64_t* counter = nullptr);

/// Residual of the first-order conditions
///
///   g + J' lambda - zeta_l + zeta_u = 0,  c(x) = 0,
///   zeta_l .* (x - l) = 0,  zeta_u .* (u - x) = 0,  zeta >= 0,  l <= x <= u,
///
/// as the max of the infinity norms of each group. Multipliers use the
/// "+J' lambda" sign; the solver's internal multipliers are negated before
/// they get here.
double kkt_residual(const Vector& x, const Vector& g, const Vector& lambda,
                    const Vector& zeta_l, const Vector& zeta_u,
                    const SmoothConstraints& cons, const BoxBounds& box);

/// Same as above with c(x) and J(x) already evaluated.
double kkt_residual(const Vector& x, const Vector& g, const Vector& lambda,
                    const Vector& zeta_l, const Vector& zeta_u,
                    const ConstraintValues& cv, const BoxBounds& box);

/// max_j |J(x) e_j - central difference| over the columns.
double jacobian_fd_error(const SmoothConstraints& cons, const Vector& x, double h = 1e-6);

}  // namespace sbm
