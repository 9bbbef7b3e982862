#include "sbm/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace sbm {

namespace {

const std::vector<std::string> kNames = {"example1",           "example2",          "eg1-demo",
                                         "eg2-demo",           "toy-linear-coupled", "circle-restoration",
                                         "circle-critical",    "qp-sanity"};

constexpr double kToyDefaultMu = 10.0;
constexpr int kToyDefaultK = 4;
constexpr int kToyN = 6;
constexpr int kToyInner = 4;
constexpr double kToyBudget = 3.0;

// ---------------------------------------------------------------------------
// Examples 1 and 2

BoxBounds example_box(ExampleSet set) {
  const double x3_lo = set == ExampleSet::kExample1 ? -1.0 : -5.0;
  const double x3_hi = set == ExampleSet::kExample1 ? 10.0 : 5.0;
  return {Eigen::Vector3d(-5.0, 0.0, x3_lo), Eigen::Vector3d(5.0, 50.0, x3_hi)};
}

BenchmarkProblem make_example(ExampleSet set, const ProblemOptions& opts) {
  const double mu = opts.mu.value_or(1.0);
  if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  BenchmarkProblem bp;
  bp.mu = mu;
  bp.problem.name = set == ExampleSet::kExample1 ? "example1" : "example2";
  bp.problem.box = example_box(set);
  auto inner = std::make_shared<ParabolaSetInner>(example_inner(set, opts.tie_rule));
  bp.scenarios.push_back(make_scenario(Matrix::Identity(3, 3), inner, bp.problem.box));
  const Scenario s = bp.scenarios.front();
  const double w1 = kExampleFirstStageWeight;
  bp.problem.objective.eval = [s, mu, w1](const Vector& x) {
    const RecourseSample rs = smooth_recourse(x, s, mu);
    OracleSample o;
    o.value = w1 * ((x[1] - 0.5) * (x[1] - 0.5) + x[2] * x[2]) + rs.value;
    o.subgradient = rs.subgradient;
    o.subgradient[1] += 2.0 * w1 * (x[1] - 0.5);
    o.subgradient[2] += 2.0 * w1 * x[2];
    if (rs.inner_status.ambiguous) o.note = "ambiguous";
    return o;
  };
  bp.problem.objective.upper_c2_constant = w1 + upper_c2_constant(s, mu);
  bp.x0 = Eigen::Vector3d(1.0, 50.0, 5.0);
  bp.config.alpha0 = 1.0;
  bp.config.eps = 1e-8;
  bp.description = set == ExampleSet::kExample1
                       ? "squared distance to {y2 <= y3^2} with y3 in [0, 10]"
                       : "squared distance to {y2 <= y3^2} with y3 in [-5, 5]";
  return bp;
}

ExtensiveForm example_extensive(ExampleSet set, const ProblemOptions& opts) {
  const double mu = opts.mu.value_or(1.0);
  const double w1 = kExampleFirstStageWeight;
  const BoxBounds xbox = example_box(set);
  const ParabolaSetInner inner = example_inner(set, opts.tie_rule);
  ExtensiveForm form;
  form.n_first = 3;
  form.f = [mu, w1](const Vector& z) {
    const Vector x = z.head(3), y = z.tail(3);
    return w1 * ((x[1] - 0.5) * (x[1] - 0.5) + x[2] * x[2]) + mu * (x - y).squaredNorm();
  };
  form.gradient = [mu, w1](const Vector& z) {
    const Vector x = z.head(3), y = z.tail(3);
    Vector g(6);
    g.head(3) = 2.0 * mu * (x - y);
    g[1] += 2.0 * w1 * (x[1] - 0.5);
    g[2] += 2.0 * w1 * x[2];
    g.tail(3) = -2.0 * mu * (x - y);
    return g;
  };
  form.project = [xbox, inner](const Vector& z) {
    Vector out(6);
    out.head(3) = xbox.clamp(z.head(3));
    out.tail(3) = inner.solve(z.tail(3), 1.0).y;
    return out;
  };
  form.metric.resize(6);
  form.metric << 2.0 * mu, 2.0 * (w1 + mu), 2.0 * (w1 + mu), 2.0 * mu, 2.0 * mu, 2.0 * mu;
  const BoxBounds yr = inner.h_range();
  form.start_box.lower.resize(6);
  form.start_box.upper.resize(6);
  form.start_box.lower << xbox.lower, yr.lower;
  form.start_box.upper << xbox.upper, yr.upper;
  form.polish_sweep = [xbox, inner, mu, w1](const Vector& z) {
    const Vector y = z.tail(3);
    Vector x(3);
    x[0] = y[0];
    x[1] = (0.5 * w1 + mu * y[1]) / (w1 + mu);
    x[2] = mu * y[2] / (w1 + mu);
    x = xbox.clamp(x);
    Vector out(6);
    out.head(3) = x;
    out.tail(3) = inner.solve(x, 1.0).y;
    return out;
  };
  return form;
}

// ---------------------------------------------------------------------------
// Toy linearly coupled problem

struct ToyData {
  double mu;
  int K;
  Vector cost;
  std::vector<Matrix> W;
  std::vector<Vector> q;
  std::vector<Vector> c;
  BoxBounds xbox;
  BoxBounds ybox;
};

ToyData make_toy_data(const ProblemOptions& opts) {
  ToyData d;
  d.mu = opts.mu.value_or(kToyDefaultMu);
  d.K = opts.K.value_or(kToyDefaultK);
  if (!(d.mu > 0.0)) throw ConfigError("mu must be positive");
  if (d.K < 1) throw ConfigError("K must be at least 1");
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> sym(-1.0, 1.0), unit(0.0, 1.0);
  d.cost.resize(kToyN);
  for (int j = 0; j < kToyN; ++j) d.cost[j] = sym(rng);
  for (int i = 0; i < d.K; ++i) {
    Matrix W = Matrix::Zero(kToyInner, kToyN);
    for (int r = 0; r < kToyInner; ++r) {
      for (int j = 0; j < kToyN; ++j) {
        if (unit(rng) < 0.4) W(r, j) = sym(rng);
      }
      if (W.row(r).squaredNorm() == 0.0) W(r, r % kToyN) = 1.0;
    }
    Vector q(kToyInner), c(kToyInner);
    for (int r = 0; r < kToyInner; ++r) {
      q[r] = 0.5 + 1.5 * unit(rng);
      c[r] = sym(rng);
    }
    d.W.push_back(W);
    d.q.push_back(q);
    d.c.push_back(c);
  }
  d.xbox = {Vector::Zero(kToyN), Vector::Constant(kToyN, 2.0)};
  d.ybox = {Vector::Constant(kToyInner, -2.0), Vector::Constant(kToyInner, 2.0)};
  return d;
}

BenchmarkProblem make_toy(const ProblemOptions& opts) {
  const ToyData d = make_toy_data(opts);
  BenchmarkProblem bp;
  bp.mu = d.mu;
  bp.problem.name = "toy-linear-coupled";
  bp.problem.box = d.xbox;
  double c2 = 0.0;
  for (int i = 0; i < d.K; ++i) {
    auto inner = std::make_shared<BoxQPInner>(d.q[i], d.c[i], d.ybox);
    bp.scenarios.push_back(make_scenario(d.W[i], inner, d.xbox));
    c2 += upper_c2_constant(bp.scenarios.back(), d.mu) / d.K;
  }
  const std::vector<Scenario> scenarios = bp.scenarios;
  const Vector cost = d.cost;
  const double mu = d.mu;
  const bool parallel = opts.parallel;
  bp.problem.objective.eval = [scenarios, cost, mu, parallel](const Vector& x) {
    const AggregateSample a = aggregate_recourse(x, scenarios, mu, parallel);
    OracleSample o;
    o.value = cost.dot(x) + a.value;
    o.subgradient = cost + a.subgradient;
    return o;
  };
  bp.problem.objective.upper_c2_constant = c2;
  bp.problem.constraints.m = 1;
  bp.problem.constraints.hessian_bound = 0.0;
  bp.problem.constraints.eval = [](const Vector& x) {
    ConstraintValues cv;
    cv.c = Vector::Constant(1, x.sum() - kToyBudget);
    cv.jacobian = Matrix::Ones(1, x.size());
    return cv;
  };
  bp.x0 = Vector::Ones(kToyN);
  bp.config.max_iters = 5000;
  bp.description = "linear first-stage cost plus averaged box-QP recourse, sum(x) = 3";
  return bp;
}

// Euclidean projection onto {lo <= x <= hi, sum(x) = s} by bisection on the shift.
Vector project_box_budget(const Vector& v, const BoxBounds& box, double s) {
  double lo = (v - box.upper).minCoeff(), hi = (v - box.lower).maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double sum = box.clamp(v - Vector::Constant(v.size(), mid)).sum();
    if (sum > s) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return box.clamp(v - Vector::Constant(v.size(), 0.5 * (lo + hi)));
}

ExtensiveForm toy_extensive(const ProblemOptions& opts) {
  const ToyData d = make_toy_data(opts);
  const Eigen::Index dim = kToyN + static_cast<Eigen::Index>(d.K) * kToyInner;
  ExtensiveForm form;
  form.n_first = kToyN;
  form.f = [d](const Vector& z) {
    const Vector x = z.head(kToyN);
    double v = d.cost.dot(x);
    for (int i = 0; i < d.K; ++i) {
      const Vector y = z.segment(kToyN + i * kToyInner, kToyInner);
      v += (d.mu * (d.W[i] * x - y).squaredNorm() + 0.5 * y.dot(d.q[i].cwiseProduct(y)) +
            d.c[i].dot(y)) /
           d.K;
    }
    return v;
  };
  form.gradient = [d, dim](const Vector& z) {
    const Vector x = z.head(kToyN);
    Vector g = Vector::Zero(dim);
    g.head(kToyN) = d.cost;
    for (int i = 0; i < d.K; ++i) {
      const Vector y = z.segment(kToyN + i * kToyInner, kToyInner);
      const Vector r = d.W[i] * x - y;
      g.head(kToyN) += 2.0 * d.mu * d.W[i].transpose() * r / d.K;
      g.segment(kToyN + i * kToyInner, kToyInner) =
          (-2.0 * d.mu * r + d.q[i].cwiseProduct(y) + d.c[i]) / d.K;
    }
    return g;
  };
  form.project = [d](const Vector& z) {
    Vector out = z;
    out.head(kToyN) = project_box_budget(z.head(kToyN), d.xbox, kToyBudget);
    for (int i = 0; i < d.K; ++i) {
      out.segment(kToyN + i * kToyInner, kToyInner) =
          d.ybox.clamp(z.segment(kToyN + i * kToyInner, kToyInner));
    }
    return out;
  };
  form.metric.resize(dim);
  double lx = 0.0;
  for (int i = 0; i < d.K; ++i) {
    const double w = spectral_norm(d.W[i]);
    lx += 2.0 * d.mu * w * w / d.K;
    for (int r = 0; r < kToyInner; ++r) {
      form.metric[kToyN + i * kToyInner + r] = (2.0 * d.mu + d.q[i][r]) / d.K;
    }
  }
  form.metric.head(kToyN).setConstant(std::max(lx, 1e-12));
  form.start_box.lower.resize(dim);
  form.start_box.upper.resize(dim);
  form.start_box.lower.head(kToyN) = d.xbox.lower;
  form.start_box.upper.head(kToyN) = d.xbox.upper;
  for (int i = 0; i < d.K; ++i) {
    form.start_box.lower.segment(kToyN + i * kToyInner, kToyInner) = d.ybox.lower;
    form.start_box.upper.segment(kToyN + i * kToyInner, kToyInner) = d.ybox.upper;
  }
  return form;
}

// ---------------------------------------------------------------------------
// Smooth constrained instances

BenchmarkProblem make_circle(bool critical) {
  BenchmarkProblem bp;
  bp.problem.name = critical ? "circle-critical" : "circle-restoration";
  bp.problem.box = {Vector::Zero(2), Vector::Constant(2, 2.0)};
  bp.problem.objective.eval = [](const Vector& x) {
    const Eigen::Vector2d t(0.9, 0.0);
    OracleSample o;
    o.value = (x - t).squaredNorm();
    o.subgradient = 2.0 * (x - t);
    return o;
  };
  bp.problem.objective.upper_c2_constant = 1.0;
  bp.problem.constraints.m = 1;
  bp.problem.constraints.hessian_bound = 1.0;
  bp.problem.constraints.eval = [](const Vector& x) {
    ConstraintValues cv;
    cv.c = Vector::Constant(1, x.squaredNorm() - 1.0);
    cv.jacobian = 2.0 * x.transpose();
    return cv;
  };
  bp.x0 = critical ? Eigen::Vector2d(0.0, 0.0) : Eigen::Vector2d(0.1, 0.1);
  bp.description = critical
                       ? "unit circle constraint started at the origin (zero constraint gradient)"
                       : "unit circle constraint whose first linearization is inconsistent in the box";
  return bp;
}

BenchmarkProblem make_qp_sanity() {
  BenchmarkProblem bp;
  bp.problem.name = "qp-sanity";
  bp.problem.box = {Vector::Zero(2), Vector::Ones(2)};
  bp.problem.objective.eval = [](const Vector& x) {
    OracleSample o;
    o.value = x.squaredNorm();
    o.subgradient = 2.0 * x;
    return o;
  };
  bp.problem.objective.upper_c2_constant = 1.0;
  bp.problem.constraints.m = 1;
  bp.problem.constraints.hessian_bound = 0.0;
  bp.problem.constraints.eval = [](const Vector& x) {
    ConstraintValues cv;
    cv.c = Vector::Constant(1, x[0] - 0.3);
    cv.jacobian = Eigen::RowVector2d(1.0, 0.0);
    return cv;
  };
  bp.x0 = Eigen::Vector2d(1.0, 1.0);
  bp.description = "|x|^2 subject to x1 = 0.3 on the unit box";
  return bp;
}

}  // namespace

const std::vector<std::string>& problem_names() { return kNames; }

bool is_sweep_only(const std::string& name) { return name == "eg1-demo" || name == "eg2-demo"; }

bool is_known_problem(const std::string& name) {
  return std::find(kNames.begin(), kNames.end(), name) != kNames.end();
}

BenchmarkProblem make_problem(const std::string& name, const ProblemOptions& opts) {
  if (!is_known_problem(name)) throw ConfigError("unknown problem '" + name + "'");
  if (is_sweep_only(name)) throw ConfigError("problem '" + name + "' only supports sweep");
  if (name == "example1") return make_example(ExampleSet::kExample1, opts);
  if (name == "example2") return make_example(ExampleSet::kExample2, opts);
  if (name == "toy-linear-coupled") return make_toy(opts);
  if (name == "circle-restoration") return make_circle(false);
  if (name == "circle-critical") return make_circle(true);
  return make_qp_sanity();
}

std::optional<ExtensiveForm> extensive_form(const std::string& name, const ProblemOptions& opts) {
  if (name == "example1") return example_extensive(ExampleSet::kExample1, opts);
  if (name == "example2") return example_extensive(ExampleSet::kExample2, opts);
  if (name == "toy-linear-coupled") return toy_extensive(opts);
  return std::nullopt;
}

ReferenceSolution solve_extensive(const ExtensiveForm& form, const ReferenceOptions& opts) {
  const Eigen::Index dim = form.metric.size();
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ReferenceSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  best.method = "multistart-projected-gradient";
  auto refine = [&](Vector z) {
    double fz = form.f(z);
    double step = 1.0;
    int stalled = 0;
    for (int it = 0; it < opts.max_steps; ++it) {
      const Vector g = form.gradient(z);
      Vector z_new;
      double f_new = 0.0;
      bool moved = false;
      for (int bt = 0; bt < 80; ++bt) {
        z_new = form.project(z - step * g.cwiseQuotient(form.metric));
        f_new = form.f(z_new);
        const Vector dz = z_new - z;
        const double model = fz + g.dot(dz) + 0.5 / step * dz.dot(form.metric.cwiseProduct(dz));
        if (f_new <= model + 1e-15 * std::abs(fz)) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
      const double change = (z_new - z).cwiseProduct(form.metric).norm() / step;
      stalled = fz - f_new <= 1e-15 * (1.0 + std::abs(fz)) ? stalled + 1 : 0;
      z = z_new;
      fz = f_new;
      step = std::min(1.0, 2.0 * step);
      if (change <= opts.tol * (1.0 + std::abs(fz)) || stalled >= 20) break;
    }
    return std::make_pair(z, fz);
  };

  for (int s = 0; s < opts.starts; ++s) {
    Vector z(dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      z[j] = form.start_box.lower[j] +
             unit(rng) * (form.start_box.upper[j] - form.start_box.lower[j]);
    }
    auto [zs, fs] = refine(form.project(z));
    if (fs < best.objective) {
      best.objective = fs;
      best.z = zs;
    }
  }
  best.starts = opts.starts;
  if (form.polish_sweep) {
    Vector z = best.z;
    double fz = best.objective;
    for (int it = 0; it < opts.max_steps; ++it) {
      const Vector z_new = form.polish_sweep(z);
      const double f_new = form.f(z_new);
      if (!(f_new < fz)) break;
      const bool small = (z_new - z).norm() <= 1e-15 * (1.0 + z.norm());
      z = z_new;
      fz = f_new;
      if (small) break;
    }
    best.z = z;
    best.objective = fz;
    best.method += "+coordinate-polish";
  }
  best.x = best.z.head(form.n_first);
  return best;
}

std::optional<ReferenceSolution> reference_solution(const std::string& name,
                                                    const ProblemOptions& opts,
                                                    const ReferenceOptions& ref) {
  if (name == "qp-sanity") {
    ReferenceSolution r;
    r.x = Eigen::Vector2d(0.3, 0.0);
    r.z = r.x;
    r.objective = 0.09;
    r.method = "analytic";
    return r;
  }
  if (name == "circle-restoration") {
    // Points of the circle inside the box are (cos t, sin t), t in [0, pi/2].
    auto f = [](double t) {
      return (std::cos(t) - 0.9) * (std::cos(t) - 0.9) + std::sin(t) * std::sin(t);
    };
    const int n = 100000;
    const double h = 0.5 * M_PI / n;
    int arg = 0;
    for (int i = 1; i <= n; ++i) {
      if (f(i * h) < f(arg * h)) arg = i;
    }
    double lo = std::max(0.0, (arg - 1) * h), hi = std::min(0.5 * M_PI, (arg + 1) * h);
    for (int it = 0; it < 200; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (f(m1) <= f(m2)) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    const double t = 0.5 * (lo + hi);
    ReferenceSolution r;
    r.x = Eigen::Vector2d(std::cos(t), std::sin(t));
    r.z = r.x;
    r.objective = f(t);
    r.method = "polar-scan";
    return r;
  }
  if (auto form = extensive_form(name, opts)) return solve_extensive(*form, ref);
  return std::nullopt;
}

}  // namespace sbm
