// Convex subproblem kernel.
//
// Three problems share one primal-dual interior-point method with a diagonal
// Hessian and dense normal equations:
//
//   eq-box:      min g'd + 1/2 d' diag(alpha) d   s.t.  A d = b,  l <= d <= u
//   penalty:     min pi (g'd + 1/2 d' diag(alpha) d) + |A d - b|_1,  l <= d <= u
//   feasibility: min |A d - b|_1,  l <= d <= u
//
// The l1 terms are handled in slack form A d - v + w = b, v, w >= 0. In the
// bundle method A = J(x_k), b = -c(x_k), l = -x_k, u = x_u - x_k.
#pragma once

#include "sbm/model.hpp"

namespace sbm {

struct EqBoxQP {
  Vector g;
  /// Diagonal of the quadratic term; every entry must be > 0.
  Vector alpha;
  Matrix A;
  Vector b;
  Vector lower;
  Vector upper;

  Eigen::Index n() const { return g.size(); }
  Eigen::Index m() const { return b.size(); }
  void validate() const;
};

struct PenaltyQP {
  EqBoxQP base;
  double pi = 1.0;
};

enum class QPStatus { kOptimal, kInconsistent };

/// Multiplier signs:
///  * eq-box:  g + alpha.*d - A' lambda - zeta_l + zeta_u = 0
///  * penalty: pi (g + alpha.*d) + A' lambda - zeta_l + zeta_u = 0, so that
///    lambda_j = sign(A_j d - b_j) on rows that are not satisfied.
struct QPSolution {
  QPStatus status = QPStatus::kOptimal;
  Vector d;
  Vector lambda;
  Vector zeta_l;
  Vector zeta_u;
  /// Slacks of the penalty form (empty for eq-box): v - w = A d - b.
  Vector v;
  Vector w;
  int iterations = 0;
  double kkt_residual = 0.0;
  /// Active-set polish succeeded (complementarity is exact).
  bool polished = false;
  /// Rows of A restricted to the free variables are linearly dependent.
  bool rank_deficient = false;
  /// Phase-1 l1 violation (eq-box only).
  double phase1_violation = 0.0;
};

struct FeasibilityResult {
  Vector d;
  /// |b|_1 - |A d - b|_1 >= 0.
  double delta_f = 0.0;
  /// |A d - b|_1 at the minimizer.
  double violation = 0.0;
};

/// Returns status kInconsistent when the phase-1 l1 violation exceeds
/// 1e-8 (1 + |b|_1). Throws SolverBreakdown on numerical failure.
QPSolution solve_eq_box(const EqBoxQP& qp, double tol = 1e-10);

QPSolution solve_penalty(const PenaltyQP& qp, double tol = 1e-10);

/// Minimizes |A d - b|_1 over the box. Ties are broken toward the minimum
/// Euclidean norm by a 1e-10 |d|^2 regularization.
FeasibilityResult solve_feasibility_l1(const Matrix& A, const Vector& b, const Vector& lower,
                                       const Vector& upper, double tol = 1e-10);

double eq_box_objective(const EqBoxQP& qp, const Vector& d);
double penalty_objective(const PenaltyQP& qp, const Vector& d);

/// KKT residual of an eq-box solution (stationarity, feasibility,
/// complementarity and sign conditions, infinity norm).
double eq_box_kkt_residual(const EqBoxQP& qp, const QPSolution& sol);
double penalty_kkt_residual(const PenaltyQP& qp, const QPSolution& sol);

/// sign(A_j d - b_j) with exact zero mapped to 0. Note A d - b = c + J d.
Vector linearized_sign(const Matrix& A, const Vector& b, const Vector& d);

/// Scalar alpha broadcast to a diagonal.
inline Vector broadcast_alpha(double alpha, Eigen::Index n) { return Vector::Constant(n, alpha); }

}  // namespace sbm
