// Simplified bundle method (single serious point, quadratic model with a
// diagonal coefficient, l1 merit line search).
#pragma once

#include <optional>
#include <vector>

#include "sbm/model.hpp"
#include "sbm/qp.hpp"

namespace sbm {

/// Phi_k(d) = r_k + g_k'd + 1/2 d' diag(alpha_k) d.
struct QuadraticModel {
  double r_k = 0.0;
  Vector g_k;
  Vector alpha_k;

  double value(const Vector& d) const;
};

/// Phi_k(0) - Phi_k(beta d). beta = 1 gives the plain predicted decrease.
double predicted_decrease(const QuadraticModel& model, const Vector& d, double beta = 1.0);

/// Two-branch ratio; a step passes when the result is strictly positive.
double acceptance_ratio(double r_current, double r_trial, double delta, double eta_plus,
                        double eta_minus);

/// max{theta_prev, eta_gamma_minus |lambda|_inf + gamma}; after a restoration
/// step theta_prev is replaced by 1/pi_prev.
double update_theta(double theta_prev, const Vector& lambda, const SolverConfig& cfg,
                    bool after_restoration, std::optional<double> pi_prev);

double merit(double r_value, const Vector& c_values, double theta);

/// Guaranteed lower bound on the accepted beta:
/// 1/2^ceil(log_{1/2}(eta_beta alpha / (2 H theta m))), capped at 1.
/// `scale` is theta for the main line search and 1/pi in restoration.
double line_search_floor(double alpha, double hessian_bound, double scale, int m,
                         double eta_beta);

struct LineSearchResult {
  double beta = 1.0;
  int halvings = 0;
  double floor = 1.0;
  Vector c_next;
};

/// Backtracking on
///   theta|c(x_k)|_1 - eta_gamma_minus beta |lambda'c(x_k)|
///       >= theta|c(x_k + beta d)|_1 - eta_beta/2 beta d'diag(alpha)d.
/// `lambda` uses the subproblem sign. Throws BacktrackExhausted below 1e-16.
LineSearchResult line_search(const Vector& x_k, const Vector& d_k, const Vector& lambda,
                             double theta, const Vector& alpha, const SmoothConstraints& cons,
                             const SolverConfig& cfg);

/// The three separate line search inequalities (with +lambda'c, eta_gamma_plus
/// and eta_gamma_minus), checked with an absolute slack `tol`.
bool line_search_conditions_hold(const Vector& c_k, const Vector& c_next, const Vector& lambda,
                                 double theta, double beta, double quad, const SolverConfig& cfg,
                                 double tol = 1e-12);

/// Smallest alpha with min over the box [d_lower, d_upper] of Phi_k >= eta r_k,
/// clamped to [alpha_min, alpha_max]. Returns nullopt when r_k <= 0.
std::optional<double> ratio_rule_alpha(double r_k, const Vector& g, const Vector& d_lower,
                                       const Vector& d_upper, double eta,
                                       const SolverConfig& cfg);

/// Barzilai-Borwein value s'y / y'y clamped to [alpha_min, alpha_max];
/// nullopt when y'y = 0 or s'y <= 0.
std::optional<double> bb_alpha(const Vector& s, const Vector& y, const SolverConfig& cfg);

/// Base value on free coordinates, base * diagonal_boost on coordinates at
/// a bound of [0, x_u].
Vector diagonal_alpha(double base, const Vector& x, const Vector& upper, const SolverConfig& cfg);

/// Iterate-level state. Coordinates are shifted to the box [0, x_u].
struct SolverState {
  Vector x;
  OracleSample sample;
  Vector upper;
  /// Scalar part of alpha (the full diagonal for the diagonal rule is derived).
  double alpha_base = 1.0;
  Vector alpha;
  double ratio_eta = 0.5;
  double theta = 0.0;
  std::optional<double> pi_prev;
  bool after_restoration = false;
  int k = 0;
  /// Previous serious point (for the Barzilai-Borwein rule).
  std::optional<Vector> x_prev;
  std::optional<Vector> g_prev;
};

struct AlphaEvent {
  bool accepted = false;
  /// Actual decrease r(x_k) - r(trial) and predicted decrease of the full step.
  double actual_decrease = 0.0;
  double delta = 0.0;
};

/// Applies the configured alpha rule. For accepted steps the state must
/// already hold the new serious point (and x_prev/g_prev the old one).
void update_alpha(SolverState& state, const AlphaEvent& event, const SolverConfig& cfg);

/// Initial state at x0 (shifted); evaluates r(x0).
SolverState initial_state(ProblemEvaluator& eval, const Vector& x0_shifted,
                          const SolverConfig& cfg);

enum class SolveStatus { kConverged, kMaxIters, kRestorationCriticalPoint, kOracleFailure };

std::string to_string(SolveStatus s);

struct SolveReport {
  SolveStatus status = SolveStatus::kMaxIters;
  /// Original (unshifted) coordinates.
  Vector final_x;
  double objective = 0.0;
  Vector final_g;
  int iterations = 0;
  int serious_steps = 0;
  int rejected_steps = 0;
  std::vector<IterationRecord> trace;
  /// KKT residual with multipliers from the last eq-box subproblem (at
  /// final_x when converged).
  double kkt_residual = 0.0;
  /// Multipliers in the "+J' lambda" diagnostic sign.
  Vector lambda;
  Vector zeta_l;
  Vector zeta_u;
  double final_step_norm = 0.0;
  double constraint_violation = 0.0;
  /// delta_f at a restoration critical point exit.
  std::optional<double> delta_f;
  std::int64_t oracle_calls = 0;
  std::string message;
};

SolveReport solve(const Problem& problem, const Vector& x0, const SolverConfig& cfg);

/// Constraints of `eval.problem()` expressed in shifted coordinates.
SmoothConstraints shifted_constraints(const ProblemEvaluator& eval);

}  // namespace sbm
