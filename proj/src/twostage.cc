#include "sbm/twostage.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/SVD>
#include <unsupported/Eigen/Polynomials>

namespace sbm {

namespace {

constexpr double kYBound = 5.0;

struct Candidate {
  Vector y;
  double value;
};

// True when a should be preferred over b under the tie rule.
bool preferred(const Vector& a, const Vector& b, TieRule rule) {
  const Eigen::Index last = a.size() - 1;
  if (a[last] != b[last]) {
    return rule == TieRule::kLargestLast ? a[last] > b[last] : a[last] < b[last];
  }
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (a[j] != b[j]) return a[j] < b[j];
  }
  return false;
}

// Picks the minimizer among candidates: exact ties (1e-12 relative) are
// resolved by the rule, near ties within ambiguity_tol flag ambiguity.
InnerSolution select(const std::vector<Candidate>& cands, TieRule rule, double ambiguity_tol) {
  if (cands.empty()) throw InnerSolveFailure("inner solve: no candidate minimizer");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : cands) best = std::min(best, c.value);
  if (!std::isfinite(best)) throw InnerSolveFailure("inner solve: non-finite candidate values");
  const double tie = 1e-12 * (1.0 + std::abs(best));
  const Candidate* chosen = nullptr;
  for (const auto& c : cands) {
    if (c.value > best + tie) continue;
    if (chosen == nullptr || preferred(c.y, chosen->y, rule)) chosen = &c;
  }
  InnerSolution out;
  out.y = chosen->y;
  out.candidates = static_cast<int>(cands.size());
  const double near = ambiguity_tol * (1.0 + std::abs(best));
  for (const auto& c : cands) {
    if (c.value <= best + near && (c.y - chosen->y).norm() > 1e-6) {
      out.ambiguous = true;
      out.status = "ambiguous";
    }
  }
  return out;
}

}  // namespace

std::vector<double> real_cubic_roots(double c3, double c2, double c1, double c0) {
  if (c3 == 0.0) throw ConfigError("real_cubic_roots: leading coefficient is zero");
  Eigen::Vector4d coeffs(c0, c1, c2, c3);
  Eigen::PolynomialSolver<double, 3> solver(coeffs);
  std::vector<double> roots;
  const double scale = std::max({std::abs(c0), std::abs(c1), std::abs(c2), std::abs(c3)});
  for (const auto& z : solver.roots()) {
    // Accept nearly real roots; Newton polishing below fixes up the real part.
    if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
    double t = z.real();
    for (int it = 0; it < 3; ++it) {
      const double f = ((c3 * t + c2) * t + c1) * t + c0;
      const double df = (3.0 * c3 * t + 2.0 * c2) * t + c1;
      if (df == 0.0) break;
      const double step = f / df;
      if (!std::isfinite(step)) break;
      t -= step;
    }
    const double resid = std::abs(((c3 * t + c2) * t + c1) * t + c0);
    if (resid <= 1e-8 * scale * (1.0 + std::abs(t) * std::abs(t) * std::abs(t))) {
      roots.push_back(t);
    }
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end(),
                          [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1 + std::abs(a)); }),
              roots.end());
  return roots;
}

// ---------------------------------------------------------------------------
// Parabola set

ParabolaSetInner::ParabolaSetInner(double y3_lower, double y3_upper, TieRule rule,
                                   double ambiguity_tol)
    : y3_lower_(y3_lower), y3_upper_(y3_upper), rule_(rule), ambiguity_tol_(ambiguity_tol) {
  if (!(y3_lower < y3_upper)) throw ConfigError("ParabolaSetInner: need y3_lower < y3_upper");
}

BoxBounds ParabolaSetInner::h_range() const {
  return {Eigen::Vector3d(-kYBound, -kYBound, y3_lower_),
          Eigen::Vector3d(kYBound, kYBound, y3_upper_)};
}

bool ParabolaSetInner::contains(const Vector& y, double tol) const {
  return y.size() == 3 && std::abs(y[0]) <= kYBound + tol && std::abs(y[1]) <= kYBound + tol &&
         y[2] >= y3_lower_ - tol && y[2] <= y3_upper_ + tol && y[1] <= y[2] * y[2] + tol;
}

InnerSolution ParabolaSetInner::solve(const Vector& target, double mu) const {
  if (target.size() != 3) throw ShapeError("ParabolaSetInner: target must have length 3");
  if (!target.allFinite()) throw InnerSolveFailure("ParabolaSetInner: non-finite target");
  const double y1 = std::clamp(target[0], -kYBound, kYBound);
  const double q2 = target[1], q3 = target[2];
  const double l = y3_lower_, u = y3_upper_;
  const double off1 = (y1 - target[0]) * (y1 - target[0]);

  std::vector<Candidate> cands;
  auto add = [&](double a, double b) {
    const double v = mu * (off1 + (a - q2) * (a - q2) + (b - q3) * (b - q3));
    cands.push_back({Eigen::Vector3d(y1, a, b), v});
  };

  const double a_box = std::clamp(q2, -kYBound, kYBound);
  const double b_box = std::clamp(q3, l, u);
  if (a_box <= b_box * b_box) {
    // The box projection is feasible, hence optimal and unique.
    add(a_box, b_box);
    InnerSolution out;
    out.y = cands.front().y;
    out.candidates = 1;
    return out;
  }

  // arc a = b^2
  const double root5 = std::sqrt(kYBound);
  const double bl = std::max(l, -root5), bu = std::min(u, root5);
  if (bl <= bu) {
    add(bl * bl, bl);
    add(bu * bu, bu);
    for (double b : real_cubic_roots(2.0, 0.0, 1.0 - 2.0 * q2, -q3)) {
      if (b >= bl && b <= bu) add(b * b, b);
    }
  }
  // edge a = -5
  add(-kYBound, b_box);
  // edge a = 5 where b^2 >= 5
  if (l <= -root5) add(kYBound, std::clamp(q3, l, std::min(u, -root5)));
  if (u >= root5) add(kYBound, std::clamp(q3, std::max(l, root5), u));
  // edges b = l and b = u
  for (double b : {l, u}) add(std::clamp(q2, -kYBound, std::min(kYBound, b * b)), b);

  return select(cands, rule_, ambiguity_tol_);
}

ParabolaSetInner example_inner(ExampleSet set, TieRule rule) {
  return set == ExampleSet::kExample1 ? ParabolaSetInner(0.0, 10.0, rule)
                                      : ParabolaSetInner(-5.0, 5.0, rule);
}

Vector project_onto_example_set(const Vector& q, ExampleSet set, TieRule rule) {
  return example_inner(set, rule).solve(q, 1.0).y;
}

// ---------------------------------------------------------------------------
// Box QP

BoxQPInner::BoxQPInner(Vector q, Vector c, BoxBounds box)
    : q_(std::move(q)), c_(std::move(c)), box_(std::move(box)) {
  box_.validate();
  if (q_.size() != box_.size() || c_.size() != box_.size()) {
    throw ShapeError("BoxQPInner: q, c and box must have the same length");
  }
  if ((q_.array() < 0.0).any()) throw ConfigError("BoxQPInner: q must be nonnegative");
}

double BoxQPInner::p(const Vector& y) const {
  return 0.5 * y.dot(q_.cwiseProduct(y)) + c_.dot(y);
}

InnerSolution BoxQPInner::solve(const Vector& target, double mu) const {
  if (target.size() != q_.size()) throw ShapeError("BoxQPInner: target has the wrong length");
  InnerSolution out;
  out.y.resize(q_.size());
  for (Eigen::Index j = 0; j < q_.size(); ++j) {
    out.y[j] = std::clamp((2.0 * mu * target[j] - c_[j]) / (2.0 * mu + q_[j]), box_.lower[j],
                          box_.upper[j]);
  }
  out.candidates = 1;
  return out;
}

// ---------------------------------------------------------------------------
// Projected gradient fallback

ProjectedGradientInner::ProjectedGradientInner(Functions f, BoxBounds y_box, std::uint64_t seed,
                                               int starts, int max_steps, double tol)
    : f_(std::move(f)),
      y_box_(std::move(y_box)),
      seed_(seed),
      starts_(starts),
      max_steps_(max_steps),
      tol_(tol) {
  y_box_.validate();
  if (!f_.h || !f_.h_jacobian || !f_.p || !f_.p_gradient) {
    throw ConfigError("ProjectedGradientInner: all functions are required");
  }
  if (starts_ < 1) throw ConfigError("ProjectedGradientInner: need at least one start");
}

InnerSolution ProjectedGradientInner::solve(const Vector& target, double mu) const {
  auto value = [&](const Vector& y) {
    return mu * (target - f_.h(y)).squaredNorm() + f_.p(y);
  };
  auto gradient = [&](const Vector& y) {
    return Vector(-2.0 * mu * f_.h_jacobian(y).transpose() * (target - f_.h(y)) + f_.p_gradient(y));
  };

  std::mt19937_64 rng(seed_);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Candidate> ends;
  for (int s = 0; s < starts_; ++s) {
    Vector y(y_box_.size());
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      const double t = s == 0 ? 0.5 : unif(rng);
      y[j] = y_box_.lower[j] + t * (y_box_.upper[j] - y_box_.lower[j]);
    }
    double fy = value(y);
    double step = 1.0;
    for (int it = 0; it < max_steps_; ++it) {
      const Vector g = gradient(y);
      Vector y_new;
      double f_new = 0.0;
      bool moved = false;
      for (int bt = 0; bt < 60; ++bt) {
        y_new = y_box_.clamp(y - step * g);
        f_new = value(y_new);
        const Vector dy = y_new - y;
        if (f_new <= fy + g.dot(dy) + 0.5 / step * dy.squaredNorm()) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved || !std::isfinite(f_new)) break;
      const double pg = (y_new - y).norm() / step;
      y = y_new;
      fy = f_new;
      step *= 2.0;
      if (pg <= tol_ * (1.0 + std::abs(fy))) break;
    }
    if (std::isfinite(fy)) ends.push_back({y, fy});
  }
  if (ends.empty()) throw InnerSolveFailure("projected gradient: every start failed");
  InnerSolution out = select(ends, TieRule::kLargestLast, 1e-8);
  out.candidates = starts_;
  return out;
}

// ---------------------------------------------------------------------------
// Scenarios

double spectral_norm(const Matrix& W) {
  if (W.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(W);
  return svd.singularValues()(0);
}

double coupling_bound(const Matrix& W, const InnerProblem& inner, const BoxBounds& x_box) {
  const BoxBounds hr = inner.h_range();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    double lo = 0.0, hi = 0.0;
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      const double a = W(i, j) * x_box.lower[j], b = W(i, j) * x_box.upper[j];
      lo += std::min(a, b);
      hi += std::max(a, b);
    }
    const double dlo = lo - hr.upper[i], dhi = hi - hr.lower[i];
    const double m = std::max(std::abs(dlo), std::abs(dhi));
    sum += m * m;
  }
  return std::sqrt(sum);
}

Scenario make_scenario(Matrix W, std::shared_ptr<const InnerProblem> inner,
                       const BoxBounds& x_box, std::optional<double> M) {
  if (!inner) throw ConfigError("make_scenario: missing inner problem");
  if (W.rows() != inner->dim_h() || W.cols() != x_box.size()) {
    throw ShapeError("make_scenario: W must be dim_h x n");
  }
  Scenario s;
  s.W = std::move(W);
  s.inner = std::move(inner);
  s.w = spectral_norm(s.W);
  s.M = M ? *M : coupling_bound(s.W, *s.inner, x_box);
  if (!std::isfinite(s.w) || !std::isfinite(s.M)) throw ConfigError("make_scenario: w or M not finite");
  return s;
}

RecourseSample smooth_recourse(const Vector& x, const Scenario& s, double mu) {
  if (!(mu > 0.0)) throw ConfigError("smooth_recourse: mu must be positive");
  if (x.size() != s.W.cols()) throw ShapeError("smooth_recourse: x has the wrong length");
  const Vector wx = s.W * x;
  RecourseSample out;
  out.inner_status = s.inner->solve(wx, mu);
  out.y_star = out.inner_status.y;
  const Vector resid = wx - s.inner->h(out.y_star);
  out.value = mu * resid.squaredNorm() + s.inner->p(out.y_star);
  out.subgradient = 2.0 * mu * s.W.transpose() * resid;
  if (!std::isfinite(out.value) || !out.subgradient.allFinite()) {
    throw InnerSolveFailure("smooth_recourse: non-finite value or subgradient");
  }
  return out;
}

AggregateSample aggregate_recourse(const Vector& x, const std::vector<Scenario>& scenarios,
                                   double mu, bool parallel) {
  if (scenarios.empty()) throw ConfigError("aggregate_recourse: no scenarios");
  std::vector<RecourseSample> samples(scenarios.size());
  if (parallel && scenarios.size() > 1) {
    std::vector<std::future<RecourseSample>> futures;
    futures.reserve(scenarios.size());
    for (const auto& s : scenarios) {
      futures.push_back(std::async(std::launch::async, [&x, &s, mu] { return smooth_recourse(x, s, mu); }));
    }
    // get() in index order rethrows the first failure by index.
    for (std::size_t i = 0; i < futures.size(); ++i) samples[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < scenarios.size(); ++i) samples[i] = smooth_recourse(x, scenarios[i], mu);
  }
  AggregateSample out;
  out.value = 0.0;
  out.subgradient = Vector::Zero(x.size());
  for (const auto& s : samples) {
    out.value += s.value;
    out.subgradient += s.subgradient;
    out.ambiguous = out.ambiguous || s.inner_status.ambiguous;
  }
  const double K = static_cast<double>(scenarios.size());
  out.value /= K;
  out.subgradient /= K;
  return out;
}

// ---------------------------------------------------------------------------
// Smoothing demos

double smoothing_demo(SmoothingDemo which, double x, double mu, double a, double b) {
  if (!(mu > 0.0)) throw ConfigError("smoothing_demo: mu must be positive");
  if (which == SmoothingDemo::kEg1) {
    auto f = [&](double y) { return y + mu * (y * y - x) * (y * y - x); };
    double best = f(0.0);
    for (double y : real_cubic_roots(4.0 * mu, 0.0, -4.0 * mu * x, 1.0)) {
      if (y >= 0.0) best = std::min(best, f(y));
    }
    return best;
  }
  if (!(a > 0.0)) throw ConfigError("smoothing_demo: eg2 needs a > 0");
  // Eliminating s >= 0 leaves a y^2 + b y + mu max(0, x - y)^2 over y >= 0.
  auto f = [&](double y) {
    const double gap = std::max(0.0, x - y);
    return a * y * y + b * y + mu * gap * gap;
  };
  const double split = std::max(x, 0.0);
  double best = f(std::max(-b / (2.0 * a), split));
  if (x > 0.0) best = std::min(best, f(std::clamp((2.0 * mu * x - b) / (2.0 * a + 2.0 * mu), 0.0, x)));
  return best;
}

double smoothing_demo_exact(SmoothingDemo which, double x, double a, double b) {
  if (which == SmoothingDemo::kEg1) {
    if (x < 0.0) throw ConfigError("smoothing_demo_exact: eg1 needs x >= 0");
    return std::sqrt(x);
  }
  if (!(a > 0.0)) throw ConfigError("smoothing_demo_exact: eg2 needs a > 0");
  const double y = std::max(-b / (2.0 * a), std::max(x, 0.0));
  return a * y * y + b * y;
}

}  // namespace sbm
