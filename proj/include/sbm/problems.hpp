// Built-in benchmark problems and their extensive-form references.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sbm/model.hpp"
#include "sbm/twostage.hpp"

namespace sbm {

struct ProblemOptions {
  /// Quadratic penalty of the second stage (default per problem).
  std::optional<double> mu;
  /// Number of scenarios (toy-linear-coupled only).
  std::optional<int> K;
  std::uint64_t seed = 20240611;
  TieRule tie_rule = TieRule::kLargestLast;
  /// Evaluate scenarios concurrently.
  bool parallel = false;
};

struct BenchmarkProblem {
  Problem problem;
  Vector x0;
  SolverConfig config;
  std::string description;
  /// Second-stage penalty in effect (0 for problems without a second stage).
  double mu = 0.0;
  std::vector<Scenario> scenarios;
};

/// Names accepted by make_problem, in registry order.
const std::vector<std::string>& problem_names();
/// Problems that only support the sweep command.
bool is_sweep_only(const std::string& name);
bool is_known_problem(const std::string& name);

/// Throws ConfigError for unknown or sweep-only names.
BenchmarkProblem make_problem(const std::string& name, const ProblemOptions& opts = {});

/// Weight on the first-stage quadratic term of the example problems.
constexpr double kExampleFirstStageWeight = 1e5;

// ---------------------------------------------------------------------------
// Extensive form

/// Joint first/second-stage problem over z = (x, y_1, ..., y_K):
/// minimize f(z) over a set with a cheap projection.
struct ExtensiveForm {
  Eigen::Index n_first = 0;
  std::function<double(const Vector&)> f;
  std::function<Vector(const Vector&)> gradient;
  /// Projection in the metric diag(metric). Each coupled block of the
  /// feasible set must carry a constant metric value.
  std::function<Vector(const Vector&)> project;
  Vector metric;
  /// Random starts are drawn uniformly from this box, then projected.
  BoxBounds start_box;
  /// Optional exact block-coordinate sweep used as a final polish.
  std::function<Vector(const Vector&)> polish_sweep;
};

struct ReferenceOptions {
  int starts = 256;
  std::uint64_t seed = 12345;
  int max_steps = 100000;
  double tol = 1e-13;
};

struct ReferenceSolution {
  double objective = 0.0;
  Vector x;
  Vector z;
  int starts = 0;
  std::string method;
};

/// Multistart scaled projected gradient with backtracking, then polish.
ReferenceSolution solve_extensive(const ExtensiveForm& form, const ReferenceOptions& opts = {});

/// nullopt when the problem has no extensive form.
std::optional<ExtensiveForm> extensive_form(const std::string& name,
                                            const ProblemOptions& opts = {});

/// Reference for a registry problem: analytic where available, otherwise the
/// extensive-form solve. nullopt when neither exists.
std::optional<ReferenceSolution> reference_solution(const std::string& name,
                                                    const ProblemOptions& opts = {},
                                                    const ReferenceOptions& ref = {});

}  // namespace sbm
