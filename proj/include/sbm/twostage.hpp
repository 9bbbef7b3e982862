// Quadratic-penalty smoothing of second-stage problems:
//
//   r_mu(x) = min_y  mu |W x - h(y)|^2 + p(y)   over an x-independent set Y,
//
// with upper subgradient g_mu = 2 mu W'(W x - h(y*)) for any minimizer y*.
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sbm/model.hpp"

namespace sbm {

/// Preference among minimizers that tie within the ambiguity tolerance.
enum class TieRule {
  /// Largest y_3 (last coordinate), then lexicographically smallest y.
  kLargestLast,
  /// Mirror rule: smallest y_3, then lexicographically smallest y.
  kSmallestLast,
};

struct InnerSolution {
  Vector y;
  /// Another minimizer with a different y lies within the ambiguity tolerance.
  bool ambiguous = false;
  int candidates = 0;
  std::string status = "ok";
};

/// Second-stage data independent of the coupling matrix.
class InnerProblem {
 public:
  virtual ~InnerProblem() = default;
  virtual Eigen::Index dim_y() const = 0;
  /// Length of h(y).
  virtual Eigen::Index dim_h() const = 0;
  virtual Vector h(const Vector& y) const = 0;
  virtual double p(const Vector& y) const = 0;
  /// Componentwise enclosure of h over Y.
  virtual BoxBounds h_range() const = 0;
  /// Minimizes mu |target - h(y)|^2 + p(y) over Y. Throws InnerSolveFailure.
  virtual InnerSolution solve(const Vector& target, double mu) const = 0;
};

/// Y = {y in R^3 : y_2 <= y_3^2, y_1, y_2 in [-5, 5], y_3 in [l_3, u_3]},
/// h(y) = y, p = 0. The inner problem is a Euclidean projection onto Y.
class ParabolaSetInner : public InnerProblem {
 public:
  ParabolaSetInner(double y3_lower, double y3_upper, TieRule rule = TieRule::kLargestLast,
                   double ambiguity_tol = 1e-5);

  Eigen::Index dim_y() const override { return 3; }
  Eigen::Index dim_h() const override { return 3; }
  Vector h(const Vector& y) const override { return y; }
  double p(const Vector&) const override { return 0.0; }
  BoxBounds h_range() const override;
  InnerSolution solve(const Vector& target, double mu) const override;

  bool contains(const Vector& y, double tol = 1e-12) const;
  double y3_lower() const { return y3_lower_; }
  double y3_upper() const { return y3_upper_; }

 private:
  double y3_lower_;
  double y3_upper_;
  TieRule rule_;
  double ambiguity_tol_;
};

enum class ExampleSet { kExample1, kExample2 };

/// Set used by the example problems: y_3 in [0, 10] (kExample1) or
/// [-5, 5] (kExample2).
ParabolaSetInner example_inner(ExampleSet set, TieRule rule = TieRule::kLargestLast);

/// Euclidean projection onto the example set.
Vector project_onto_example_set(const Vector& q, ExampleSet set,
                                TieRule rule = TieRule::kLargestLast);

/// h(y) = y, p(y) = 1/2 y' diag(q) y + c'y on a box, q >= 0. Closed form.
class BoxQPInner : public InnerProblem {
 public:
  BoxQPInner(Vector q, Vector c, BoxBounds box);

  Eigen::Index dim_y() const override { return q_.size(); }
  Eigen::Index dim_h() const override { return q_.size(); }
  Vector h(const Vector& y) const override { return y; }
  double p(const Vector& y) const override;
  BoxBounds h_range() const override { return box_; }
  InnerSolution solve(const Vector& target, double mu) const override;

 private:
  Vector q_;
  Vector c_;
  BoxBounds box_;
};

/// User-defined inner problem on a box of y, solved by projected gradient
/// descent with Armijo backtracking from 32 seeded starts.
class ProjectedGradientInner : public InnerProblem {
 public:
  struct Functions {
    std::function<Vector(const Vector&)> h;
    /// Jacobian of h, dim_h x dim_y.
    std::function<Matrix(const Vector&)> h_jacobian;
    std::function<double(const Vector&)> p;
    std::function<Vector(const Vector&)> p_gradient;
    BoxBounds h_range;
  };

  ProjectedGradientInner(Functions f, BoxBounds y_box, std::uint64_t seed = 7, int starts = 32,
                         int max_steps = 5000, double tol = 1e-10);

  Eigen::Index dim_y() const override { return y_box_.size(); }
  Eigen::Index dim_h() const override { return f_.h_range.size(); }
  Vector h(const Vector& y) const override { return f_.h(y); }
  double p(const Vector& y) const override { return f_.p(y); }
  BoxBounds h_range() const override { return f_.h_range; }
  InnerSolution solve(const Vector& target, double mu) const override;

 private:
  Functions f_;
  BoxBounds y_box_;
  std::uint64_t seed_;
  int starts_;
  int max_steps_;
  double tol_;
};

struct Scenario {
  Matrix W;
  std::shared_ptr<const InnerProblem> inner;
  /// Spectral norm of W.
  double w = 0.0;
  /// Bound on |W x - h(y)| over the first-stage box and Y.
  double M = 0.0;
};

/// Builds a scenario, computing w and (unless given) M by interval
/// evaluation over `x_box` and the inner h-range.
Scenario make_scenario(Matrix W, std::shared_ptr<const InnerProblem> inner,
                       const BoxBounds& x_box, std::optional<double> M = std::nullopt);

double spectral_norm(const Matrix& W);
double coupling_bound(const Matrix& W, const InnerProblem& inner, const BoxBounds& x_box);

struct RecourseSample {
  double value = 0.0;
  Vector y_star;
  Vector subgradient;
  InnerSolution inner_status;
};

RecourseSample smooth_recourse(const Vector& x, const Scenario& s, double mu);

struct AggregateSample {
  double value = 0.0;
  Vector subgradient;
  /// Some scenario reported an ambiguous minimizer.
  bool ambiguous = false;
};

/// (1/K) sum of the scenario values and subgradients, summed in index order.
/// With `parallel`, scenarios are evaluated concurrently before the reduction.
AggregateSample aggregate_recourse(const Vector& x, const std::vector<Scenario>& scenarios,
                                   double mu, bool parallel = false);

/// Upper-C2 constant mu w^2 of a smoothed recourse function.
inline double upper_c2_constant(const Scenario& s, double mu) { return mu * s.w * s.w; }

/// Lipschitz constant mu w (w D + 2 M) with D the first-stage box diameter.
inline double lipschitz_constant(const Scenario& s, double mu, double diameter) {
  return mu * s.w * (s.w * diameter + 2.0 * s.M);
}

enum class SmoothingDemo { kEg1, kEg2 };

/// eg1: min_{y >= 0} y + mu (y^2 - x)^2.
/// eg2: min_{y, s >= 0} a y^2 + b y + mu (x + s - y)^2 (requires a > 0).
double smoothing_demo(SmoothingDemo which, double x, double mu, double a = 1.0, double b = -1.0);

/// Unsmoothed values: sqrt(x) for eg1 (x >= 0), min_{y >= max(x, 0)} a y^2 + b y for eg2.
double smoothing_demo_exact(SmoothingDemo which, double x, double a = 1.0, double b = -1.0);

/// Real roots of c3 t^3 + c2 t^2 + c1 t + c0 (leading coefficient nonzero),
/// Newton-polished, ascending.
std::vector<double> real_cubic_roots(double c3, double c2, double c1, double c0);

}  // namespace sbm
