// sbm: run benchmark problems, smoothing sweeps and extensive-form references.
#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sbm/bundle.hpp"
#include "sbm/io.hpp"
#include "sbm/problems.hpp"
#include "sbm/twostage.hpp"

namespace {

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitMaxIters = 2;
constexpr int kExitCritical = 3;

struct Options {
  std::string problem;
  std::optional<double> mu;
  std::vector<double> mus;
  std::optional<double> alpha0;
  std::optional<double> eps;
  std::optional<int> max_iters;
  std::optional<std::string> alpha_strategy;
  std::string trace_path;
  std::string report_path;
  std::string reference_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> K;
  std::string tie_rule = "largest-last";
  std::string grid;
  double a = 1.0;
  double b = -1.0;
  bool no_reference = false;
  bool parallel = false;
};

sbm::ProblemOptions problem_options(const Options& o) {
  sbm::ProblemOptions p;
  p.mu = o.mu;
  p.K = o.K;
  if (o.seed) p.seed = *o.seed;
  p.parallel = o.parallel;
  if (o.tie_rule == "largest-last") {
    p.tie_rule = sbm::TieRule::kLargestLast;
  } else if (o.tie_rule == "smallest-last") {
    p.tie_rule = sbm::TieRule::kSmallestLast;
  } else {
    throw sbm::ConfigError("unknown tie rule '" + o.tie_rule + "'");
  }
  return p;
}

void require_known(const std::string& name) {
  if (!sbm::is_known_problem(name)) {
    std::string known;
    for (const auto& n : sbm::problem_names()) known += " " + n;
    throw sbm::ConfigError("unknown problem '" + name + "' (known:" + known + ")");
  }
}

// Writes `text` to `path` ("-" or empty means stdout).
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw sbm::Error("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw sbm::Error("failed writing '" + path + "'");
}

int exit_code(sbm::SolveStatus s) {
  switch (s) {
    case sbm::SolveStatus::kConverged:
      return kExitConverged;
    case sbm::SolveStatus::kMaxIters:
      return kExitMaxIters;
    case sbm::SolveStatus::kRestorationCriticalPoint:
      return kExitCritical;
    case sbm::SolveStatus::kOracleFailure:
      return kExitError;
  }
  return kExitError;
}

int cmd_solve(const Options& o) {
  require_known(o.problem);
  const sbm::ProblemOptions popts = problem_options(o);
  sbm::BenchmarkProblem bp = sbm::make_problem(o.problem, popts);
  sbm::SolverConfig cfg = bp.config;
  if (o.alpha0) cfg.alpha0 = *o.alpha0;
  if (o.eps) cfg.eps = *o.eps;
  if (o.max_iters) cfg.max_iters = *o.max_iters;
  if (o.alpha_strategy) cfg.alpha_strategy = sbm::alpha_strategy_from_string(*o.alpha_strategy);
  cfg.validate();

  std::optional<sbm::ReferenceSolution> reference;
  if (!o.reference_path.empty()) {
    std::ifstream f(o.reference_path);
    if (!f) throw sbm::Error("cannot open reference '" + o.reference_path + "'");
    reference = sbm::reference_from_json(nlohmann::json::parse(f));
  }

  const sbm::SolveReport report = sbm::solve(bp.problem, bp.x0, cfg);
  if (!reference && !o.no_reference) reference = sbm::reference_solution(o.problem, popts);

  if (!o.trace_path.empty()) {
    std::ostringstream csv;
    sbm::write_trace_csv(csv, report.trace);
    emit(o.trace_path, csv.str());
  }
  const nlohmann::json j = sbm::report_to_json(o.problem, report, cfg, reference);
  if (!o.report_path.empty()) emit(o.report_path, j.dump(2) + "\n");

  std::cout << "problem     " << o.problem << "\n"
            << "status      " << sbm::to_string(report.status) << "\n"
            << "iterations  " << report.iterations << " (" << report.serious_steps
            << " serious, " << report.rejected_steps << " rejected)\n"
            << "objective   " << sbm::format_real(report.objective) << "\n"
            << "kkt         " << sbm::format_real(report.kkt_residual) << "\n";
  if (reference) {
    std::cout << "reference   " << sbm::format_real(reference->objective) << "\n"
              << "gap         "
              << sbm::format_real(sbm::reference_gap(report.objective, reference->objective))
              << "\n";
  }
  if (!report.message.empty()) std::cout << "message     " << report.message << "\n";
  return exit_code(report.status);
}

int cmd_sweep(const Options& o) {
  require_known(o.problem);
  sbm::SmoothingDemo which;
  if (o.problem == "eg1-demo") {
    which = sbm::SmoothingDemo::kEg1;
  } else if (o.problem == "eg2-demo") {
    which = sbm::SmoothingDemo::kEg2;
  } else {
    throw sbm::ConfigError("sweep needs eg1-demo or eg2-demo, got '" + o.problem + "'");
  }
  const std::string spec =
      o.grid.empty() ? (which == sbm::SmoothingDemo::kEg1 ? "0:1.5:0.01" : "-1:1:0.01") : o.grid;
  const std::vector<double> grid = sbm::parse_grid(spec);
  std::vector<double> mus = o.mus;
  if (mus.empty()) mus = {1.0, 10.0, 100.0};
  for (double mu : mus) {
    if (!(mu > 0.0)) throw sbm::ConfigError("mu must be positive");
  }
  if (which == sbm::SmoothingDemo::kEg2 && !(o.a > 0.0)) throw sbm::ConfigError("eg2 needs a > 0");

  std::vector<sbm::SweepRow> rows;
  for (double mu : mus) {
    double sup_gap = 0.0;
    for (double x : grid) {
      sbm::SweepRow r;
      r.mu = mu;
      r.x = x;
      r.r_mu = sbm::smoothing_demo(which, x, mu, o.a, o.b);
      r.exact = which == sbm::SmoothingDemo::kEg1 && x < 0.0
                    ? std::nan("")
                    : sbm::smoothing_demo_exact(which, x, o.a, o.b);
      if (!std::isnan(r.exact)) sup_gap = std::max(sup_gap, std::abs(r.r_mu - r.exact));
      rows.push_back(r);
    }
    std::cerr << "mu " << mu << ": sup |r_mu - r| over grid = " << sup_gap << "\n";
  }
  std::ostringstream csv;
  sbm::write_sweep_csv(csv, rows);
  emit(o.out_path, csv.str());
  return 0;
}

int cmd_reference(const Options& o) {
  require_known(o.problem);
  const auto ref = sbm::reference_solution(o.problem, problem_options(o));
  if (!ref) throw sbm::ConfigError("problem '" + o.problem + "' has no reference");
  emit(o.out_path, sbm::reference_to_json(o.problem, *ref).dump(2) + "\n");
  if (!o.out_path.empty() && o.out_path != "-") {
    std::cout << "reference " << sbm::format_real(ref->objective) << " (" << ref->method << ")\n";
  }
  return 0;
}

void add_problem_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--problem", o.problem, "problem name")->required();
  cmd->add_option("--seed", o.seed, "problem data seed");
  cmd->add_option("--K", o.K, "scenario count (toy-linear-coupled)");
  cmd->add_option("--tie-rule", o.tie_rule, "largest-last | smallest-last");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simplified bundle method benchmarks"};
  app.require_subcommand(1);
  Options o;

  CLI::App* solve = app.add_subcommand("solve", "solve a benchmark problem");
  add_problem_flags(solve, o);
  solve->add_option("--mu", o.mu, "second-stage penalty");
  solve->add_option("--alpha0", o.alpha0, "initial alpha");
  solve->add_option("--eps", o.eps, "step-norm tolerance");
  solve->add_option("--max-iters", o.max_iters, "trial-step limit");
  solve->add_option("--alpha-strategy", o.alpha_strategy, "fixed | bb | ratio | diagonal");
  solve->add_option("--trace", o.trace_path, "trace CSV path");
  solve->add_option("--report", o.report_path, "report JSON path");
  solve->add_option("--reference", o.reference_path, "reference JSON from 'sbm reference'");
  solve->add_flag("--no-reference", o.no_reference, "skip the reference solve");
  solve->add_flag("--parallel", o.parallel, "evaluate scenarios concurrently");

  CLI::App* sweep = app.add_subcommand("sweep", "tabulate a smoothing demo");
  add_problem_flags(sweep, o);
  sweep->add_option("--mu", o.mus, "penalty values (repeatable, default 1 10 100)");
  sweep->add_option("--grid", o.grid, "start:stop:step");
  sweep->add_option("--a", o.a, "eg2 quadratic coefficient");
  sweep->add_option("--b", o.b, "eg2 linear coefficient");
  sweep->add_option("--out", o.out_path, "CSV path (default stdout)");

  CLI::App* reference = app.add_subcommand("reference", "solve the extensive form");
  add_problem_flags(reference, o);
  reference->add_option("--mu", o.mu, "second-stage penalty");
  reference->add_option("--out", o.out_path, "JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitError;
  }

  try {
    if (*solve) return cmd_solve(o);
    if (*sweep) return cmd_sweep(o);
    return cmd_reference(o);
  } catch (const std::exception& e) {
    std::cerr << "sbm: " << e.what() << "\n";
    return kExitError;
  }
}
