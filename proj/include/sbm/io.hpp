// CSV traces and sweeps, JSON reports.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbm/bundle.hpp"
#include "sbm/problems.hpp"

namespace sbm {

constexpr int kSchemaVersion = 1;

/// Columns: k, step_kind, r, merit, step_norm, alpha, beta, theta, pi,
/// kkt_residual, oracle_calls. Preceded by a "# schema_version" line.
void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace);

/// Parses "start:stop:step" into the inclusive grid start, start + step, ...
/// Throws ConfigError on malformed input or an empty grid.
std::vector<double> parse_grid(const std::string& spec);

struct SweepRow {
  double mu = 0.0;
  double x = 0.0;
  double r_mu = 0.0;
  double exact = 0.0;
};

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

nlohmann::json config_to_json(const SolverConfig& cfg);
nlohmann::json reference_to_json(const std::string& problem, const ReferenceSolution& ref);
ReferenceSolution reference_from_json(const nlohmann::json& j);

/// Relative gap (objective - reference) / max(1, |reference|).
double reference_gap(double objective, double reference);

nlohmann::json report_to_json(const std::string& problem, const SolveReport& report,
                              const SolverConfig& cfg,
                              const std::optional<ReferenceSolution>& reference);

/// Full-precision scientific formatting used in every CSV field.
std::string format_real(double v);

}  // namespace sbm
