#include "sbm/restoration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sbm {

namespace {

constexpr int kMaxPiReductions = 200;
constexpr double kMinBeta = 1e-16;

double l1(const Vector& v) { return v.size() > 0 ? v.lpNorm<1>() : 0.0; }

}  // namespace

double penalty_predicted_decrease(const QuadraticModel& model, const Vector& d, double pi,
                                  const Vector& c_values, const Matrix& J) {
  const double model_part = -model.g_k.dot(d) - 0.5 * d.dot(model.alpha_k.cwiseProduct(d));
  const double feas_part = c_values.size() > 0 ? l1(c_values) - l1(c_values + J * d) : 0.0;
  return pi * model_part + feas_part;
}

double pi_lower_bound(double delta_f, const Vector& g, double alpha, double diameter,
                      const SolverConfig& cfg) {
  const double denom = g.norm() * diameter + 0.5 * alpha * diameter * diameter;
  if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
  return (1.0 - cfg.eta_f) * delta_f / denom;
}

PiUpdate update_pi(double pi_in, double delta_f, const QuadraticModel& model,
                   const Vector& c_values, const Matrix& J, const Vector& d_lower,
                   const Vector& d_upper, const SolverConfig& cfg) {
  if (!(pi_in > 0.0)) throw ConfigError("update_pi: pi must be positive");
  PenaltyQP qp;
  qp.base.g = model.g_k;
  qp.base.alpha = model.alpha_k;
  qp.base.A = J;
  qp.base.b = -c_values;
  qp.base.lower = d_lower;
  qp.base.upper = d_upper;
  PiUpdate out;
  out.pi = pi_in;
  while (true) {
    qp.pi = out.pi;
    out.solution = solve_penalty(qp, cfg.qp_tol);
    out.delta_pi = penalty_predicted_decrease(model, out.solution.d, out.pi, c_values, J);
    if (out.delta_pi >= cfg.eta_f * delta_f) return out;
    if (out.reductions >= kMaxPiReductions) {
      std::ostringstream os;
      os << "update_pi: no acceptable pi after " << kMaxPiReductions << " reductions (pi "
         << out.pi << ", delta_pi " << out.delta_pi << ", delta_f " << delta_f << ")";
      throw LoopGuard(os.str());
    }
    out.pi *= cfg.eta_pi;
    ++out.reductions;
  }
}

LineSearchResult restoration_line_search(const Vector& x_k, const Vector& d_k,
                                         const Vector& lambda, double pi, const Vector& alpha,
                                         const SmoothConstraints& cons, const SolverConfig& cfg) {
  LineSearchResult res;
  res.floor =
      line_search_floor(alpha.minCoeff(), cons.hessian_bound, 1.0 / pi, cons.m, cfg.eta_beta);
  if (cons.m == 0) {
    res.c_next = Vector::Zero(0);
    return res;
  }
  const ConstraintValues cv = cons.evaluate(x_k);
  const double lin = lambda.dot(cv.jacobian * d_k);
  const double quad = d_k.dot(alpha.cwiseProduct(d_k));
  double beta = 1.0;
  while (true) {
    res.c_next = cons.evaluate(x_k + beta * d_k).c;
    const double lhs = l1(cv.c) / pi + beta / pi * lin;
    const double rhs = l1(res.c_next) / pi - cfg.eta_beta * 0.5 * beta * quad;
    if (lhs >= rhs) break;
    beta *= 0.5;
    ++res.halvings;
    if (beta < kMinBeta) {
      std::ostringstream os;
      os << "restoration_line_search: beta fell below " << kMinBeta << " (lhs " << lhs
         << ", rhs " << rhs << ", predicted floor " << res.floor
         << "); the constraint Hessian bound is probably violated";
      throw BacktrackExhausted(os.str());
    }
  }
  res.beta = beta;
  return res;
}

double multiplier_law_violation(const Vector& lambda, const Vector& linearized_residual,
                                double row_tol) {
  double v = 0.0;
  for (Eigen::Index j = 0; j < lambda.size(); ++j) {
    v = std::max(v, std::abs(lambda[j]) - 1.0);
    const double r = linearized_residual[j];
    if (std::abs(r) > row_tol) v = std::max(v, std::abs(lambda[j] - (r > 0.0 ? 1.0 : -1.0)));
  }
  return v;
}

RestorationOutcome restore(SolverState& state, ProblemEvaluator& eval,
                           const SmoothConstraints& cons, const SolverConfig& cfg,
                           std::vector<IterationRecord>& trace) {
  RestorationOutcome out;
  out.kind = RestorationOutcome::Kind::kIterationLimit;
  const Eigen::Index n = state.x.size();
  const BoxBounds shifted_box{Vector::Zero(n), state.upper};
  while (state.k < cfg.max_iters) {
    double pi = 1.0 / state.theta;
    if (state.pi_prev) pi = std::min(*state.pi_prev, pi);

    const ConstraintValues cv = cons.evaluate(state.x);
    const Vector d_lower = -state.x;
    const Vector d_upper = state.upper - state.x;
    const FeasibilityResult feas =
        solve_feasibility_l1(cv.jacobian, -cv.c, d_lower, d_upper, cfg.qp_tol);
    out.delta_f = feas.delta_f;
    out.pi_final = pi;
    if (feas.delta_f <= cfg.eps_f) {
      out.kind = RestorationOutcome::Kind::kCriticalPointExit;
      return out;
    }

    const QuadraticModel model{state.sample.value, state.sample.subgradient, state.alpha};
    const PiUpdate upd = update_pi(pi, feas.delta_f, model, cv.c, cv.jacobian, d_lower, d_upper,
                                   cfg);
    pi = upd.pi;
    state.pi_prev = pi;
    out.pi_final = pi;
    const QPSolution& sol = upd.solution;
    const Vector& d = sol.d;
    out.lambda = sol.lambda;

    const Vector lin = cv.c + cv.jacobian * d;
    const double law = multiplier_law_violation(sol.lambda, lin, 1e-7);
    if (law > 1e-6) {
      std::ostringstream os;
      os << "restore: penalty multipliers violate the sign law by " << law;
      throw SolverBreakdown(os.str());
    }

    IterationRecord rec;
    rec.k = state.k;
    rec.r_value = model.r_k;
    rec.step_norm = d.norm();
    rec.step_quadratic = d.dot(state.alpha.cwiseProduct(d));
    rec.alpha = state.alpha_base;
    rec.theta = state.theta;
    rec.pi = pi;
    rec.merit_value = model.r_k + l1(cv.c) / pi;
    rec.merit_next = std::numeric_limits<double>::quiet_NaN();
    rec.rho_beta = std::numeric_limits<double>::quiet_NaN();
    rec.kkt_residual = kkt_residual(state.x, model.g_k, sol.lambda / pi, sol.zeta_l / pi,
                                    sol.zeta_u / pi, cv, shifted_box);

    const Vector trial = (state.x + d).cwiseMax(0.0).cwiseMin(state.upper);
    const OracleSample s_trial = eval.objective(trial);
    const double delta = predicted_decrease(model, d, 1.0);
    const double rho = acceptance_ratio(model.r_k, s_trial.value, delta, 1.0, 1.0);
    rec.delta = delta;
    rec.rho = rho;

    bool accepted = false;
    if (rho > 0.0) {
      const LineSearchResult ls =
          restoration_line_search(state.x, d, sol.lambda, pi, state.alpha, cons, cfg);
      const double beta = ls.beta;
      const Vector x_next = beta == 1.0
                                ? trial
                                : Vector((state.x + beta * d).cwiseMax(0.0).cwiseMin(state.upper));
      const OracleSample s_next = beta == 1.0 ? s_trial : eval.objective(x_next);
      const double rho_beta = acceptance_ratio(model.r_k, s_next.value,
                                               predicted_decrease(model, d, beta), 1.0, 1.0);
      rec.beta = beta;
      rec.rho_beta = rho_beta;
      if (rho_beta >= 0.0) {
        accepted = true;
        rec.merit_next = s_next.value + l1(ls.c_next) / pi;
        state.x_prev = state.x;
        state.g_prev = state.sample.subgradient;
        state.x = x_next;
        state.sample = s_next;
      }
    }
    rec.step_kind = accepted ? StepKind::kRestorationSerious : StepKind::kRestorationRejected;
    rec.oracle_calls = eval.oracle_calls();
    update_alpha(state, AlphaEvent{accepted, model.r_k - s_trial.value, delta}, cfg);
    trace.push_back(rec);
    ++state.k;
    ++out.iterations_used;
    if (accepted) {
      state.after_restoration = true;
      out.kind = RestorationOutcome::Kind::kSeriousStep;
      out.x_next = state.x;
      return out;
    }
  }
  return out;
}

}  // namespace sbm
