#include "sbm/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sbm {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void require_shape(Eigen::Index got, Eigen::Index want, const char* name) {
  if (got != want) {
    std::ostringstream os;
    os << name << ": expected size " << want << ", got " << got;
    throw ShapeError(os.str());
  }
}

}  // namespace

void BoxBounds::validate() const {
  require_shape(upper.size(), lower.size(), "BoxBounds.upper");
  for (Eigen::Index j = 0; j < lower.size(); ++j) {
    if (!std::isfinite(lower[j]) || !std::isfinite(upper[j]) || !(lower[j] < upper[j])) {
      std::ostringstream os;
      os << "BoxBounds: need finite lower < upper at index " << j;
      throw ConfigError(os.str());
    }
  }
}

bool BoxBounds::contains(const Vector& x, double tol) const {
  if (x.size() != lower.size()) return false;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (x[j] < lower[j] - tol || x[j] > upper[j] + tol) return false;
  }
  return true;
}

Vector BoxBounds::clamp(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

double BoxBounds::diameter() const { return (upper - lower).norm(); }

ConstraintValues SmoothConstraints::evaluate(const Vector& x) const {
  if (m == 0 || !eval) {
    return {Vector::Zero(0), Matrix::Zero(0, x.size())};
  }
  ConstraintValues cv = eval(x);
  require_shape(cv.c.size(), m, "constraint values");
  if (cv.jacobian.rows() != m || cv.jacobian.cols() != x.size()) {
    throw ShapeError("constraint Jacobian has wrong shape");
  }
  return cv;
}

std::string to_string(AlphaStrategy s) {
  switch (s) {
    case AlphaStrategy::kFixedMultiplicative:
      return "fixed";
    case AlphaStrategy::kBarzilaiBorwein:
      return "bb";
    case AlphaStrategy::kRatio:
      return "ratio";
    case AlphaStrategy::kDiagonal:
      return "diagonal";
  }
  return "unknown";
}

AlphaStrategy alpha_strategy_from_string(const std::string& s) {
  if (s == "fixed" || s == "fixed-multiplicative") return AlphaStrategy::kFixedMultiplicative;
  if (s == "bb") return AlphaStrategy::kBarzilaiBorwein;
  if (s == "ratio") return AlphaStrategy::kRatio;
  if (s == "diagonal") return AlphaStrategy::kDiagonal;
  throw ConfigError("unknown alpha strategy '" + s + "'");
}

void SolverConfig::validate() const {
  require(eta_l_plus > 0.0 && eta_l_plus <= 1.0, "need 0 < eta_l_plus <= 1");
  require(eta_l_minus >= 1.0, "need eta_l_minus >= 1");
  require(eta_beta > 0.0 && eta_beta < eta_gamma_plus && eta_gamma_plus <= 1.0,
          "need 0 < eta_beta < eta_gamma_plus <= 1");
  require(eta_gamma_minus >= 1.0, "need eta_gamma_minus >= 1");
  require(eta_alpha > 1.0, "need eta_alpha > 1");
  require(gamma > 0.0, "need gamma > 0");
  require(eta_pi > 0.0 && eta_pi < 1.0, "need 0 < eta_pi < 1");
  require(eta_f > 0.0 && eta_f < 1.0, "need 0 < eta_f < 1");
  require(eps_f >= 0.0, "need eps_f >= 0");
  require(eps >= 0.0, "need eps >= 0");
  require(alpha_min > 0.0 && alpha_min <= alpha_max, "need 0 < alpha_min <= alpha_max");
  require(alpha0 > 0.0, "need alpha0 > 0");
  require(eta_u_plus > 0.0, "need eta_u_plus > 0");
  require(ratio_eta0 > 0.0 && ratio_eta0 < 1.0, "need 0 < ratio_eta0 < 1");
  require(ratio_eta_max >= ratio_eta0 && ratio_eta_max < 1.0,
          "need ratio_eta0 <= ratio_eta_max < 1");
  require(diagonal_boost >= 1.0, "need diagonal_boost >= 1");
  require(initial_theta() > 0.0, "need theta0 > 0");
  require(max_iters > 0, "need max_iters > 0");
  require(qp_tol > 0.0, "need qp_tol > 0");
}

std::string to_string(StepKind k) {
  switch (k) {
    case StepKind::kSerious:
      return "serious";
    case StepKind::kRejected:
      return "rejected";
    case StepKind::kRestorationSerious:
      return "restoration-serious";
    case StepKind::kRestorationRejected:
      return "restoration-rejected";
  }
  return "unknown";
}

bool is_restoration(StepKind k) {
  return k == StepKind::kRestorationSerious || k == StepKind::kRestorationRejected;
}

bool is_serious(StepKind k) {
  return k == StepKind::kSerious || k == StepKind::kRestorationSerious;
}

ProblemEvaluator::ProblemEvaluator(const Problem& problem) : problem_(&problem) {
  problem.box.validate();
  upper_ = problem.box.upper - problem.box.lower;
}

Vector ProblemEvaluator::to_shifted(const Vector& x) const {
  require_shape(x.size(), n(), "point");
  return x - problem_->box.lower;
}

Vector ProblemEvaluator::to_original(const Vector& x_shifted) const {
  require_shape(x_shifted.size(), n(), "point");
  return x_shifted + problem_->box.lower;
}

OracleSample ProblemEvaluator::objective(const Vector& x_shifted) {
  Vector x = to_original(x_shifted);
  if (!problem_->box.contains(x, 1e-12)) throw Error("objective: point outside the box");
  // The shift can push a bound-hugging point outside by one ulp.
  x = problem_->box.clamp(x);
  return evaluate_objective(problem_->objective, x, problem_->box, &calls_);
}

ConstraintValues ProblemEvaluator::constraints(const Vector& x_shifted) const {
  return problem_->constraints.evaluate(problem_->box.clamp(to_original(x_shifted)));
}

OracleSample evaluate_objective(const NonsmoothOracle& oracle, const Vector& x,
                                const BoxBounds& box, std::int64_t* counter) {
  require_shape(x.size(), box.size(), "point");
  if (!box.contains(x, 1e-12)) throw Error("evaluate_objective: point outside the box");
  if (!oracle.eval) throw Error("evaluate_objective: empty oracle");
  OracleSample s = oracle.eval(x);
  if (counter != nullptr) ++*counter;
  if (!std::isfinite(s.value)) throw OracleFailure("oracle returned a non-finite value", -1);
  require_shape(s.subgradient.size(), x.size(), "subgradient");
  for (Eigen::Index j = 0; j < s.subgradient.size(); ++j) {
    if (!std::isfinite(s.subgradient[j])) {
      std::ostringstream os;
      os << "oracle returned a non-finite subgradient entry at index " << j;
      throw OracleFailure(os.str(), j);
    }
  }
  return s;
}

double kkt_residual(const Vector& x, const Vector& g, const Vector& lambda,
                    const Vector& zeta_l, const Vector& zeta_u,
                    const SmoothConstraints& cons, const BoxBounds& box) {
  require_shape(x.size(), box.size(), "x");
  return kkt_residual(x, g, lambda, zeta_l, zeta_u, cons.evaluate(x), box);
}

double kkt_residual(const Vector& x, const Vector& g, const Vector& lambda,
                    const Vector& zeta_l, const Vector& zeta_u,
                    const ConstraintValues& cv, const BoxBounds& box) {
  const Eigen::Index n = x.size();
  require_shape(box.size(), n, "box");
  require_shape(g.size(), n, "g");
  require_shape(zeta_l.size(), n, "zeta_l");
  require_shape(zeta_u.size(), n, "zeta_u");
  require_shape(lambda.size(), cv.c.size(), "lambda");
  if (cv.jacobian.rows() != cv.c.size() || (cv.c.size() > 0 && cv.jacobian.cols() != n)) {
    throw ShapeError("kkt_residual: Jacobian has wrong shape");
  }

  Vector stat = g - zeta_l + zeta_u;
  if (cv.c.size() > 0) stat += cv.jacobian.transpose() * lambda;
  double res = stat.lpNorm<Eigen::Infinity>();
  if (cv.c.size() > 0) res = std::max(res, cv.c.lpNorm<Eigen::Infinity>());
  for (Eigen::Index j = 0; j < n; ++j) {
    res = std::max(res, std::abs(zeta_l[j] * (x[j] - box.lower[j])));
    res = std::max(res, std::abs(zeta_u[j] * (x[j] - box.upper[j])));
    res = std::max(res, std::max(-zeta_l[j], 0.0));
    res = std::max(res, std::max(-zeta_u[j], 0.0));
    res = std::max(res, std::max(box.lower[j] - x[j], 0.0));
    res = std::max(res, std::max(x[j] - box.upper[j], 0.0));
  }
  return res;
}

double jacobian_fd_error(const SmoothConstraints& cons, const Vector& x, double h) {
  if (cons.m == 0) return 0.0;
  const ConstraintValues cv = cons.evaluate(x);
  double err = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vector xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Vector fd = (cons.evaluate(xp).c - cons.evaluate(xm).c) / (2.0 * h);
    err = std::max(err, (cv.jacobian.col(j) - fd).norm());
  }
  return err;
}

}  // namespace sbm
