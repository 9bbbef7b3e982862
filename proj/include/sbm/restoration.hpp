// Consistency restoration: l1-penalty subproblems with a feasibility-driven
// penalty update, used when the linearized constraints have no solution in
// the box.
#pragma once

#include <optional>
#include <vector>

#include "sbm/bundle.hpp"

namespace sbm {

/// pi (-g'd - 1/2 d'diag(alpha)d) + |c|_1 - |c + J d|_1, with J stored m x n.
double penalty_predicted_decrease(const QuadraticModel& model, const Vector& d, double pi,
                                  const Vector& c_values, const Matrix& J);

struct PiUpdate {
  double pi = 1.0;
  QPSolution solution;
  double delta_pi = 0.0;
  int reductions = 0;
};

/// Re-solves the penalty subproblem with pi <- eta_pi pi until
/// delta_pi >= eta_f delta_f. Throws LoopGuard after 200 reductions.
PiUpdate update_pi(double pi_in, double delta_f, const QuadraticModel& model,
                   const Vector& c_values, const Matrix& J, const Vector& d_lower,
                   const Vector& d_upper, const SolverConfig& cfg);

/// Lower bound (1 - eta_f) delta_f / (|g| D + 1/2 alpha D^2) on pi above which
/// the reduction loop has already stopped, D = |x_u|.
double pi_lower_bound(double delta_f, const Vector& g, double alpha, double diameter,
                      const SolverConfig& cfg);

/// Backtracking on
///   |c(x_k)|_1/pi + beta/pi lambda'(J d) >= |c(x_k + beta d)|_1/pi
///       - eta_beta/2 beta d'diag(alpha)d
/// with lambda in the penalty sign.
LineSearchResult restoration_line_search(const Vector& x_k, const Vector& d_k,
                                         const Vector& lambda, double pi, const Vector& alpha,
                                         const SmoothConstraints& cons, const SolverConfig& cfg);

/// Largest violation of the penalty multiplier law: lambda_j = sign(c_j + J_j d)
/// on rows with |c_j + J_j d| > row_tol and |lambda_j| <= 1 everywhere.
double multiplier_law_violation(const Vector& lambda, const Vector& linearized_residual,
                                double row_tol);

struct RestorationOutcome {
  /// kIterationLimit: cfg.max_iters reached before a serious step.
  enum class Kind { kSeriousStep, kCriticalPointExit, kIterationLimit };
  Kind kind = Kind::kSeriousStep;
  std::optional<Vector> x_next;
  double pi_final = 1.0;
  int iterations_used = 0;
  double delta_f = 0.0;
  /// Multipliers of the last penalty subproblem (penalty sign).
  Vector lambda;
};

/// Runs the restoration loop from state.x. On a serious step the state moves
/// to the new point; records are appended to `trace` with increasing k.
RestorationOutcome restore(SolverState& state, ProblemEvaluator& eval,
                           const SmoothConstraints& cons, const SolverConfig& cfg,
                           std::vector<IterationRecord>& trace);

}  // namespace sbm
