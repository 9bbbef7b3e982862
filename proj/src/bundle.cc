#include "sbm/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sbm/restoration.hpp"

namespace sbm {

double QuadraticModel::value(const Vector& d) const {
  return r_k + g_k.dot(d) + 0.5 * d.dot(alpha_k.cwiseProduct(d));
}

double predicted_decrease(const QuadraticModel& model, const Vector& d, double beta) {
  return -beta * model.g_k.dot(d) - 0.5 * beta * beta * d.dot(model.alpha_k.cwiseProduct(d));
}

double acceptance_ratio(double r_current, double r_trial, double delta, double eta_plus,
                        double eta_minus) {
  const double actual = r_current - r_trial;
  return delta >= 0.0 ? actual - eta_plus * delta : actual - eta_minus * delta;
}

double update_theta(double theta_prev, const Vector& lambda, const SolverConfig& cfg,
                    bool after_restoration, std::optional<double> pi_prev) {
  const double lam = lambda.size() > 0 ? lambda.lpNorm<Eigen::Infinity>() : 0.0;
  const double candidate = cfg.eta_gamma_minus * lam + cfg.gamma;
  if (after_restoration) {
    if (!pi_prev || !(*pi_prev > 0.0)) {
      throw ConfigError("update_theta: restoration branch needs a positive pi");
    }
    return std::max(1.0 / *pi_prev, candidate);
  }
  return std::max(theta_prev, candidate);
}

double merit(double r_value, const Vector& c_values, double theta) {
  return r_value + (c_values.size() > 0 ? theta * c_values.lpNorm<1>() : 0.0);
}

double line_search_floor(double alpha, double hessian_bound, double scale, int m,
                         double eta_beta) {
  if (m == 0 || !(hessian_bound > 0.0)) return 1.0;
  const double arg = eta_beta * alpha / (2.0 * hessian_bound * scale * m);
  if (arg >= 1.0) return 1.0;
  return std::pow(0.5, std::ceil(std::log2(1.0 / arg)));
}

namespace {

constexpr double kMinBeta = 1e-16;

[[noreturn]] void backtrack_failure(const char* where, double beta, double lhs, double rhs,
                                    double floor) {
  std::ostringstream os;
  os << where << ": beta fell below " << kMinBeta << " (last beta " << beta << ", lhs " << lhs
     << ", rhs " << rhs << ", predicted floor " << floor
     << "); the constraint Hessian bound is probably violated";
  throw BacktrackExhausted(os.str());
}

double l1(const Vector& v) { return v.size() > 0 ? v.lpNorm<1>() : 0.0; }

}  // namespace

LineSearchResult line_search(const Vector& x_k, const Vector& d_k, const Vector& lambda,
                             double theta, const Vector& alpha, const SmoothConstraints& cons,
                             const SolverConfig& cfg) {
  LineSearchResult res;
  res.floor = line_search_floor(alpha.minCoeff(), cons.hessian_bound, theta, cons.m, cfg.eta_beta);
  if (cons.m == 0) {
    res.c_next = Vector::Zero(0);
    return res;
  }
  const Vector c_k = cons.evaluate(x_k).c;
  const double lc = std::abs(lambda.dot(c_k));
  const double quad = d_k.dot(alpha.cwiseProduct(d_k));
  double beta = 1.0;
  while (true) {
    res.c_next = cons.evaluate(x_k + beta * d_k).c;
    const double lhs = theta * l1(c_k) - cfg.eta_gamma_minus * beta * lc;
    const double rhs = theta * l1(res.c_next) - cfg.eta_beta * 0.5 * beta * quad;
    if (lhs >= rhs) break;
    beta *= 0.5;
    ++res.halvings;
    if (beta < kMinBeta) backtrack_failure("line_search", beta, lhs, rhs, res.floor);
  }
  res.beta = beta;
  return res;
}

bool line_search_conditions_hold(const Vector& c_k, const Vector& c_next, const Vector& lambda,
                                 double theta, double beta, double quad, const SolverConfig& cfg,
                                 double tol) {
  const double base = theta * l1(c_k);
  const double lc = c_k.size() > 0 ? lambda.dot(c_k) : 0.0;
  const double rhs = theta * l1(c_next) - cfg.eta_beta * 0.5 * beta * quad - tol;
  return base + beta * lc >= rhs && base + cfg.eta_gamma_plus * beta * lc >= rhs &&
         base + cfg.eta_gamma_minus * beta * lc >= rhs;
}

std::optional<double> ratio_rule_alpha(double r_k, const Vector& g, const Vector& d_lower,
                                       const Vector& d_upper, double eta,
                                       const SolverConfig& cfg) {
  if (!(r_k > 0.0)) return std::nullopt;
  const double target = eta * r_k;
  auto min_model = [&](double a) {
    double v = r_k;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      const double d = std::clamp(-g[j] / a, d_lower[j], d_upper[j]);
      v += g[j] * d + 0.5 * a * d * d;
    }
    return v;
  };
  if (min_model(cfg.alpha_min) >= target) return cfg.alpha_min;
  if (min_model(cfg.alpha_max) < target) return cfg.alpha_max;
  double lo = std::log(cfg.alpha_min), hi = std::log(cfg.alpha_max);
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (min_model(std::exp(mid)) >= target) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return std::exp(hi);
}

std::optional<double> bb_alpha(const Vector& s, const Vector& y, const SolverConfig& cfg) {
  const double yy = y.squaredNorm();
  const double sy = s.dot(y);
  if (!(yy > 0.0) || !(sy > 0.0)) return std::nullopt;
  return std::clamp(sy / yy, cfg.alpha_min, cfg.alpha_max);
}

Vector diagonal_alpha(double base, const Vector& x, const Vector& upper,
                      const SolverConfig& cfg) {
  Vector a = Vector::Constant(x.size(), base);
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double tol = 1e-10 * (1.0 + upper[j]);
    if (x[j] <= tol || upper[j] - x[j] <= tol) {
      a[j] = std::min(base * cfg.diagonal_boost, cfg.alpha_max);
    }
  }
  return a;
}

void update_alpha(SolverState& state, const AlphaEvent& event, const SolverConfig& cfg) {
  auto clamp_alpha = [&](double a) { return std::clamp(a, cfg.alpha_min, cfg.alpha_max); };
  const bool very_good = cfg.alpha_decrease && event.accepted && event.delta > 0.0 &&
                         event.actual_decrease - cfg.eta_u_plus * event.delta > 0.0;
  switch (cfg.alpha_strategy) {
    case AlphaStrategy::kFixedMultiplicative:
    case AlphaStrategy::kDiagonal:
      if (!event.accepted) {
        state.alpha_base = clamp_alpha(cfg.eta_alpha * state.alpha_base);
      } else if (very_good) {
        state.alpha_base = clamp_alpha(state.alpha_base / cfg.eta_alpha);
      }
      break;
    case AlphaStrategy::kBarzilaiBorwein:
      if (!event.accepted) {
        state.alpha_base = clamp_alpha(cfg.eta_alpha * state.alpha_base);
      } else if (state.x_prev && state.g_prev) {
        if (auto a = bb_alpha(state.x - *state.x_prev, state.sample.subgradient - *state.g_prev,
                              cfg)) {
          state.alpha_base = *a;
        }
      }
      break;
    case AlphaStrategy::kRatio: {
      if (!event.accepted) {
        state.ratio_eta = std::min(cfg.eta_alpha * state.ratio_eta, cfg.ratio_eta_max);
      } else if (very_good) {
        state.ratio_eta = std::max(state.ratio_eta / cfg.eta_alpha, cfg.ratio_eta0);
      }
      const auto a = ratio_rule_alpha(state.sample.value, state.sample.subgradient, -state.x,
                                      state.upper - state.x, state.ratio_eta, cfg);
      if (!event.accepted) {
        state.alpha_base = clamp_alpha(std::max(a.value_or(0.0), cfg.eta_alpha * state.alpha_base));
      } else if (a) {
        state.alpha_base = *a;
      }
      break;
    }
  }
  state.alpha = cfg.alpha_strategy == AlphaStrategy::kDiagonal
                    ? diagonal_alpha(state.alpha_base, state.x, state.upper, cfg)
                    : broadcast_alpha(state.alpha_base, state.x.size());
}

SolverState initial_state(ProblemEvaluator& eval, const Vector& x0_shifted,
                          const SolverConfig& cfg) {
  SolverState st;
  st.x = x0_shifted;
  st.upper = eval.upper();
  st.sample = eval.objective(st.x);
  st.alpha_base = std::clamp(cfg.alpha0, cfg.alpha_min, cfg.alpha_max);
  st.ratio_eta = cfg.ratio_eta0;
  st.theta = cfg.initial_theta();
  st.alpha = cfg.alpha_strategy == AlphaStrategy::kDiagonal
                 ? diagonal_alpha(st.alpha_base, st.x, st.upper, cfg)
                 : broadcast_alpha(st.alpha_base, st.x.size());
  return st;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::kConverged:
      return "converged";
    case SolveStatus::kMaxIters:
      return "max_iters";
    case SolveStatus::kRestorationCriticalPoint:
      return "restoration_critical_point";
    case SolveStatus::kOracleFailure:
      return "oracle_failure";
  }
  return "unknown";
}

SmoothConstraints shifted_constraints(const ProblemEvaluator& eval) {
  const Problem* problem = &eval.problem();
  SmoothConstraints out;
  out.m = problem->constraints.m;
  out.hessian_bound = problem->constraints.hessian_bound;
  if (out.m > 0) {
    out.eval = [problem](const Vector& x) {
      return problem->constraints.eval(problem->box.clamp(x + problem->box.lower));
    };
  }
  return out;
}

SolveReport solve(const Problem& problem, const Vector& x0, const SolverConfig& cfg) {
  cfg.validate();
  problem.box.validate();
  if (x0.size() != problem.dimension()) throw ShapeError("solve: x0 has the wrong dimension");
  if (!problem.box.contains(x0, 1e-12)) throw ConfigError("solve: x0 is outside the box");

  ProblemEvaluator eval(problem);
  const SmoothConstraints cons = shifted_constraints(eval);
  const Eigen::Index n = problem.dimension();
  const BoxBounds shifted_box{Vector::Zero(n), eval.upper()};

  SolveReport rep;
  rep.lambda = Vector::Zero(cons.m);
  rep.zeta_l = Vector::Zero(n);
  rep.zeta_u = Vector::Zero(n);
  SolverState st;
  bool have_state = false;
  try {
    st = initial_state(eval, eval.to_shifted(problem.box.clamp(x0)), cfg);
    have_state = true;
    while (true) {
      if (st.k >= cfg.max_iters) {
        rep.status = SolveStatus::kMaxIters;
        break;
      }
      const ConstraintValues cv = cons.evaluate(st.x);
      const QuadraticModel model{st.sample.value, st.sample.subgradient, st.alpha};
      EqBoxQP qp;
      qp.g = model.g_k;
      qp.alpha = st.alpha;
      qp.A = cv.jacobian;
      qp.b = -cv.c;
      qp.lower = -st.x;
      qp.upper = st.upper - st.x;
      const QPSolution sol = solve_eq_box(qp, cfg.qp_tol);

      if (sol.status == QPStatus::kInconsistent) {
        const RestorationOutcome out = restore(st, eval, cons, cfg, rep.trace);
        if (out.kind == RestorationOutcome::Kind::kCriticalPointExit) {
          rep.status = SolveStatus::kRestorationCriticalPoint;
          rep.delta_f = out.delta_f;
          std::ostringstream os;
          os << "linearized constraints cannot be improved in the box (delta_f " << out.delta_f
             << ")";
          rep.message = os.str();
          break;
        }
        if (!out.x_next) {
          rep.status = SolveStatus::kMaxIters;
          break;
        }
        continue;
      }

      const Vector& d = sol.d;
      const double kkt =
          kkt_residual(st.x, model.g_k, -sol.lambda, sol.zeta_l, sol.zeta_u, cv, shifted_box);
      rep.lambda = -sol.lambda;
      rep.zeta_l = sol.zeta_l;
      rep.zeta_u = sol.zeta_u;
      rep.kkt_residual = kkt;
      rep.final_step_norm = d.norm();
      if (d.norm() <= cfg.eps) {
        rep.status = SolveStatus::kConverged;
        break;
      }

      IterationRecord rec;
      rec.k = st.k;
      rec.r_value = model.r_k;
      rec.step_norm = d.norm();
      rec.step_quadratic = d.dot(st.alpha.cwiseProduct(d));
      rec.alpha = st.alpha_base;
      rec.kkt_residual = kkt;
      rec.beta = 0.0;
      rec.merit_next = std::numeric_limits<double>::quiet_NaN();
      rec.rho_beta = std::numeric_limits<double>::quiet_NaN();

      const Vector trial = (st.x + d).cwiseMax(0.0).cwiseMin(st.upper);
      const OracleSample s_trial = eval.objective(trial);
      const double delta = predicted_decrease(model, d, 1.0);
      const double rho =
          acceptance_ratio(model.r_k, s_trial.value, delta, cfg.eta_l_plus, cfg.eta_l_minus);
      st.theta = update_theta(st.theta, sol.lambda, cfg, st.after_restoration, st.pi_prev);
      st.after_restoration = false;
      rec.theta = st.theta;
      rec.merit_value = merit(model.r_k, cv.c, st.theta);
      rec.delta = delta;
      rec.rho = rho;

      bool accepted = false;
      if (rho > 0.0) {
        const LineSearchResult ls = line_search(st.x, d, sol.lambda, st.theta, st.alpha, cons, cfg);
        const double beta = ls.beta;
        const Vector x_next =
            beta == 1.0 ? trial : Vector((st.x + beta * d).cwiseMax(0.0).cwiseMin(st.upper));
        const OracleSample s_next = beta == 1.0 ? s_trial : eval.objective(x_next);
        const double delta_beta = predicted_decrease(model, d, beta);
        const double rho_beta = acceptance_ratio(model.r_k, s_next.value, delta_beta,
                                                 cfg.eta_gamma_plus, cfg.eta_gamma_minus);
        rec.beta = beta;
        rec.rho_beta = rho_beta;
        if (rho_beta >= 0.0) {
          accepted = true;
          rec.merit_next = merit(s_next.value, ls.c_next, st.theta);
          st.x_prev = st.x;
          st.g_prev = st.sample.subgradient;
          st.x = x_next;
          st.sample = s_next;
        }
      }
      rec.step_kind = accepted ? StepKind::kSerious : StepKind::kRejected;
      rec.oracle_calls = eval.oracle_calls();
      update_alpha(st, AlphaEvent{accepted, model.r_k - s_trial.value, delta}, cfg);
      rep.trace.push_back(rec);
      ++st.k;
    }
  } catch (const OracleFailure& e) {
    rep.status = SolveStatus::kOracleFailure;
    rep.message = e.what();
  }

  if (have_state) {
    rep.final_x = eval.to_original(st.x);
    rep.objective = st.sample.value;
    rep.final_g = st.sample.subgradient;
    rep.constraint_violation =
        cons.m > 0 ? cons.evaluate(st.x).c.lpNorm<Eigen::Infinity>() : 0.0;
  } else {
    rep.final_x = x0;
  }
  rep.iterations = static_cast<int>(rep.trace.size());
  for (const auto& r : rep.trace) {
    if (is_serious(r.step_kind)) {
      ++rep.serious_steps;
    } else {
      ++rep.rejected_steps;
    }
  }
  rep.oracle_calls = eval.oracle_calls();
  return rep;
}

}  // namespace sbm
