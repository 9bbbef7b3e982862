#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "sbm/model.hpp"
#include "sbm/problems.hpp"
#include "sbm/twostage.hpp"

using namespace sbm;

namespace {

NonsmoothOracle l1_oracle() {
  NonsmoothOracle o;
  o.eval = [](const Vector& x) {
    OracleSample s;
    s.value = x.lpNorm<1>();
    s.subgradient = x.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    return s;
  };
  return o;
}

BoxBounds box2(double lo, double hi) { return {Vector::Constant(2, lo), Vector::Constant(2, hi)}; }

SmoothConstraints no_constraints() {
  SmoothConstraints c;
  c.m = 0;
  return c;
}

}  // namespace

TEST(EvaluateObjective, L1AtSignPattern) {
  std::int64_t calls = 0;
  const OracleSample s = evaluate_objective(l1_oracle(), Eigen::Vector2d(1, -2), box2(-5, 5), &calls);
  EXPECT_DOUBLE_EQ(s.value, 3.0);
  EXPECT_EQ(s.subgradient, Eigen::Vector2d(1, -1));
  EXPECT_EQ(calls, 1);
}

TEST(EvaluateObjective, L1AtKinkReturnsZero) {
  const OracleSample s = evaluate_objective(l1_oracle(), Eigen::Vector2d(0, 0), box2(-5, 5));
  EXPECT_DOUBLE_EQ(s.value, 0.0);
  EXPECT_EQ(s.subgradient, Eigen::Vector2d(0, 0));
}

TEST(EvaluateObjective, Example2RecourseValue) {
  auto inner = std::make_shared<ParabolaSetInner>(example_inner(ExampleSet::kExample2));
  const BoxBounds xbox{Eigen::Vector3d(-5, 0, -5), Eigen::Vector3d(5, 50, 5)};
  const Scenario s = make_scenario(Matrix::Identity(3, 3), inner, xbox);
  NonsmoothOracle o;
  o.eval = [s](const Vector& x) {
    const RecourseSample r = smooth_recourse(x, s, 1.0);
    return OracleSample{r.value, r.subgradient, ""};
  };
  EXPECT_NEAR(evaluate_objective(o, Eigen::Vector3d(0, 1, 0), xbox).value, 0.75, 1e-12);
}

TEST(EvaluateObjective, NonFiniteValueReportsIndexMinusOne) {
  NonsmoothOracle o;
  o.eval = [](const Vector& x) {
    return OracleSample{std::numeric_limits<double>::quiet_NaN(), Vector::Zero(x.size()), ""};
  };
  try {
    evaluate_objective(o, Eigen::Vector2d(0, 0), box2(-1, 1));
    FAIL();
  } catch (const OracleFailure& e) {
    EXPECT_EQ(e.index(), -1);
  }
}

TEST(EvaluateObjective, NonFiniteSubgradientReportsIndex) {
  NonsmoothOracle o;
  o.eval = [](const Vector&) {
    return OracleSample{0.0, Eigen::Vector2d(0.0, std::numeric_limits<double>::infinity()), ""};
  };
  try {
    evaluate_objective(o, Eigen::Vector2d(0, 0), box2(-1, 1));
    FAIL();
  } catch (const OracleFailure& e) {
    EXPECT_EQ(e.index(), 1);
  }
}

TEST(EvaluateObjective, RejectsPointsOutsideTheBox) {
  EXPECT_THROW(evaluate_objective(l1_oracle(), Eigen::Vector2d(1.0 + 1e-9, 0), box2(-1, 1)), Error);
  EXPECT_NO_THROW(evaluate_objective(l1_oracle(), Eigen::Vector2d(1.0 + 1e-13, 0), box2(-1, 1)));
  EXPECT_THROW(evaluate_objective(l1_oracle(), Eigen::Vector3d(0, 0, 0), box2(-1, 1)), ShapeError);
}

TEST(KktResidual, UnconstrainedMinimum) {
  const BoxBounds box{Vector::Constant(1, -1), Vector::Constant(1, 1)};
  EXPECT_EQ(kkt_residual(Vector::Zero(1), Vector::Zero(1), Vector(0), Vector::Zero(1),
                         Vector::Zero(1), no_constraints(), box),
            0.0);
}

TEST(KktResidual, LowerBoundMultiplierAbsorbsGradient) {
  const BoxBounds box{Vector::Zero(1), Vector::Ones(1)};
  EXPECT_EQ(kkt_residual(Vector::Zero(1), Vector::Ones(1), Vector(0), Vector::Ones(1),
                         Vector::Zero(1), no_constraints(), box),
            0.0);
}

TEST(KktResidual, PureFeasibilityViolation) {
  SmoothConstraints c;
  c.m = 1;
  c.eval = [](const Vector& x) {
    return ConstraintValues{Vector::Constant(1, x[0] - 1.0), Matrix::Ones(1, 1)};
  };
  const BoxBounds box{Vector::Zero(1), Vector::Constant(1, 2.0)};
  EXPECT_DOUBLE_EQ(kkt_residual(Vector::Constant(1, 0.5), Vector::Zero(1), Vector::Zero(1),
                                Vector::Zero(1), Vector::Zero(1), c, box),
                   0.5);
}

TEST(KktResidual, DimensionMismatchThrows) {
  const BoxBounds box{Vector::Zero(2), Vector::Ones(2)};
  EXPECT_THROW(kkt_residual(Vector::Zero(2), Vector::Zero(3), Vector(0), Vector::Zero(2),
                            Vector::Zero(2), no_constraints(), box),
               ShapeError);
}

TEST(KktResidual, ZeroExactlyWhenConditionsHold) {
  // c(x) = x1 + x2 - 1 on [0,1]^2; stationary points built from random multipliers.
  SmoothConstraints c;
  c.m = 1;
  c.eval = [](const Vector& x) {
    return ConstraintValues{Vector::Constant(1, x.sum() - 1.0), Matrix::Ones(1, 2)};
  };
  const BoxBounds box{Vector::Zero(2), Vector::Ones(2)};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const double x1 = u(rng);
    const Eigen::Vector2d x(x1, 1.0 - x1);
    const Vector lambda = Vector::Constant(1, 2.0 * u(rng) - 1.0);
    const Vector g = -Matrix::Ones(1, 2).transpose() * lambda;
    const double r = kkt_residual(x, g, lambda, Vector::Zero(2), Vector::Zero(2), c, box);
    EXPECT_LE(r, 1e-12);
    EXPECT_GE(r, 0.0);
    const double perturbed = kkt_residual(x, g + Eigen::Vector2d(1e-3, 0), lambda, Vector::Zero(2),
                                          Vector::Zero(2), c, box);
    EXPECT_NEAR(perturbed, 1e-3, 1e-12);
  }
  // Complementarity and sign violations are both visible.
  EXPECT_GT(kkt_residual(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(-1, 0), Vector::Zero(1),
                         Eigen::Vector2d(-1, 0), Vector::Zero(2), c, box),
            0.0);
  EXPECT_GT(kkt_residual(Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(1, 0), Vector::Zero(1),
                         Eigen::Vector2d(1, 0), Vector::Zero(2), c, box),
            0.0);
}

TEST(Jacobian, BuiltInProblemsMatchCentralDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const std::string& name : problem_names()) {
    if (is_sweep_only(name)) continue;
    const BenchmarkProblem bp = make_problem(name);
    if (bp.problem.constraints.m == 0) continue;
    const BoxBounds& box = bp.problem.box;
    for (int t = 0; t < 20; ++t) {
      Vector x(box.size());
      for (Eigen::Index j = 0; j < x.size(); ++j) {
        x[j] = box.lower[j] + (0.05 + 0.9 * u(rng)) * (box.upper[j] - box.lower[j]);
      }
      EXPECT_LE(jacobian_fd_error(bp.problem.constraints, x, 1e-6), 1e-5) << name;
    }
  }
}

TEST(SolverConfig, DefaultsAreValid) {
  const SolverConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_DOUBLE_EQ(cfg.initial_theta(), cfg.gamma);
}

TEST(SolverConfig, RejectsBrokenOrderings) {
  auto expect_bad = [](auto mutate) {
    SolverConfig cfg;
    mutate(cfg);
    EXPECT_THROW(cfg.validate(), ConfigError);
  };
  expect_bad([](SolverConfig& c) { c.eta_l_plus = 0.0; });
  expect_bad([](SolverConfig& c) { c.eta_l_plus = 1.5; });
  expect_bad([](SolverConfig& c) { c.eta_l_minus = 0.9; });
  expect_bad([](SolverConfig& c) { c.eta_beta = 0.6; });
  expect_bad([](SolverConfig& c) { c.eta_gamma_plus = 1.2; });
  expect_bad([](SolverConfig& c) { c.eta_gamma_minus = 0.5; });
  expect_bad([](SolverConfig& c) { c.eta_alpha = 1.0; });
  expect_bad([](SolverConfig& c) { c.gamma = 0.0; });
  expect_bad([](SolverConfig& c) { c.alpha_min = 2.0, c.alpha_max = 1.0; });
  expect_bad([](SolverConfig& c) { c.eta_pi = 1.0; });
  expect_bad([](SolverConfig& c) { c.eta_f = 0.0; });
  expect_bad([](SolverConfig& c) { c.eps_f = -1.0; });
  expect_bad([](SolverConfig& c) { c.eps = -1.0; });
  expect_bad([](SolverConfig& c) { c.max_iters = 0; });
  expect_bad([](SolverConfig& c) { c.ratio_eta_max = 1.0; });
}

TEST(ProblemEvaluator, ShiftRoundTrip) {
  Problem p;
  p.box = {Eigen::Vector2d(-1, 2), Eigen::Vector2d(3, 5)};
  p.objective = l1_oracle();
  ProblemEvaluator eval(p);
  EXPECT_EQ(eval.upper(), Eigen::Vector2d(4, 3));
  const Eigen::Vector2d x(0.5, 4.0);
  EXPECT_EQ(eval.to_original(eval.to_shifted(x)), x);
  EXPECT_DOUBLE_EQ(eval.objective(eval.to_shifted(x)).value, 4.5);
  EXPECT_EQ(eval.oracle_calls(), 1);
}

TEST(BoxBounds, RejectsEmptyOrMismatchedBoxes) {
  EXPECT_THROW((BoxBounds{Eigen::Vector2d(0, 1), Eigen::Vector2d(1, 1)}.validate()), Error);
  EXPECT_THROW((BoxBounds{Eigen::Vector2d(0, 0), Vector::Ones(3)}.validate()), ShapeError);
  EXPECT_NO_THROW((BoxBounds{Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1)}.validate()));
}

TEST(StepKind, Names) {
  EXPECT_EQ(to_string(StepKind::kSerious), "serious");
  EXPECT_EQ(to_string(StepKind::kRestorationRejected), "restoration-rejected");
  EXPECT_TRUE(is_restoration(StepKind::kRestorationSerious));
  EXPECT_TRUE(is_serious(StepKind::kRestorationSerious));
  EXPECT_FALSE(is_serious(StepKind::kRejected));
  EXPECT_THROW(alpha_strategy_from_string("newton"), ConfigError);
}
