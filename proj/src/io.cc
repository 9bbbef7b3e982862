#include "sbm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace sbm {

namespace {

nlohmann::json vector_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index j = 0; j < v.size(); ++j) a.push_back(v[j]);
  return a;
}

double parse_real(const std::string& s, const std::string& spec) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("grid '" + spec + "': cannot parse '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17e", v);
  return buf;
}

void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& trace) {
  os << "# schema_version: " << kSchemaVersion << "\n";
  os << "k,step_kind,r,merit,step_norm,alpha,beta,theta,pi,kkt_residual,oracle_calls\n";
  for (const IterationRecord& rec : trace) {
    os << rec.k << ',' << to_string(rec.step_kind) << ',' << format_real(rec.r_value) << ','
       << format_real(rec.merit_value) << ',' << format_real(rec.step_norm) << ','
       << format_real(rec.alpha) << ',' << format_real(rec.beta) << ','
       << format_real(rec.theta) << ',' << (rec.pi ? format_real(*rec.pi) : "") << ','
       << format_real(rec.kkt_residual) << ',' << rec.oracle_calls << '\n';
  }
}

std::vector<double> parse_grid(const std::string& spec) {
  const auto first = spec.find(':');
  const auto second = first == std::string::npos ? first : spec.find(':', first + 1);
  if (second == std::string::npos || spec.find(':', second + 1) != std::string::npos) {
    throw ConfigError("grid '" + spec + "': expected start:stop:step");
  }
  const double start = parse_real(spec.substr(0, first), spec);
  const double stop = parse_real(spec.substr(first + 1, second - first - 1), spec);
  const double step = parse_real(spec.substr(second + 1), spec);
  if (!(step > 0.0)) throw ConfigError("grid '" + spec + "': step must be positive");
  if (stop < start) throw ConfigError("grid '" + spec + "' is empty");
  const double count = std::floor((stop - start) / step + 1e-9);
  if (count > 1e7) throw ConfigError("grid '" + spec + "' has too many points");
  std::vector<double> grid;
  for (long i = 0; i <= static_cast<long>(count); ++i) grid.push_back(start + i * step);
  return grid;
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "# schema_version: " << kSchemaVersion << "\n";
  os << "mu,x,r_mu,exact\n";
  for (const SweepRow& r : rows) {
    os << format_real(r.mu) << ',' << format_real(r.x) << ',' << format_real(r.r_mu) << ','
       << format_real(r.exact) << '\n';
  }
}

nlohmann::json config_to_json(const SolverConfig& cfg) {
  nlohmann::json j;
  j["eta_l_plus"] = cfg.eta_l_plus;
  j["eta_l_minus"] = cfg.eta_l_minus;
  j["eta_beta"] = cfg.eta_beta;
  j["eta_gamma_plus"] = cfg.eta_gamma_plus;
  j["eta_gamma_minus"] = cfg.eta_gamma_minus;
  j["eta_alpha"] = cfg.eta_alpha;
  j["alpha0"] = cfg.alpha0;
  j["alpha_min"] = cfg.alpha_min;
  j["alpha_max"] = cfg.alpha_max;
  j["alpha_strategy"] = to_string(cfg.alpha_strategy);
  j["alpha_decrease"] = cfg.alpha_decrease;
  j["eta_u_plus"] = cfg.eta_u_plus;
  j["ratio_eta0"] = cfg.ratio_eta0;
  j["ratio_eta_max"] = cfg.ratio_eta_max;
  j["diagonal_boost"] = cfg.diagonal_boost;
  j["gamma"] = cfg.gamma;
  j["theta0"] = cfg.initial_theta();
  j["eta_pi"] = cfg.eta_pi;
  j["eta_f"] = cfg.eta_f;
  j["eps_f"] = cfg.eps_f;
  j["eps"] = cfg.eps;
  j["max_iters"] = cfg.max_iters;
  j["qp_tol"] = cfg.qp_tol;
  return j;
}

nlohmann::json reference_to_json(const std::string& problem, const ReferenceSolution& ref) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["problem"] = problem;
  j["objective"] = ref.objective;
  j["x"] = vector_json(ref.x);
  j["z"] = vector_json(ref.z);
  j["starts"] = ref.starts;
  j["method"] = ref.method;
  return j;
}

ReferenceSolution reference_from_json(const nlohmann::json& j) {
  if (j.value("schema_version", 0) != kSchemaVersion) {
    throw ConfigError("reference file: unsupported schema_version");
  }
  ReferenceSolution ref;
  ref.objective = j.at("objective").get<double>();
  const auto xs = j.at("x").get<std::vector<double>>();
  ref.x = Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
  if (j.contains("z")) {
    const auto zs = j.at("z").get<std::vector<double>>();
    ref.z = Eigen::Map<const Vector>(zs.data(), static_cast<Eigen::Index>(zs.size()));
  }
  ref.starts = j.value("starts", 0);
  ref.method = j.value("method", std::string());
  return ref;
}

double reference_gap(double objective, double reference) {
  return (objective - reference) / std::max(1.0, std::abs(reference));
}

nlohmann::json report_to_json(const std::string& problem, const SolveReport& report,
                              const SolverConfig& cfg,
                              const std::optional<ReferenceSolution>& reference) {
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["problem"] = problem;
  j["status"] = to_string(report.status);
  j["iterations"] = report.iterations;
  j["serious_steps"] = report.serious_steps;
  j["rejected_steps"] = report.rejected_steps;
  j["final_x"] = vector_json(report.final_x);
  j["objective"] = report.objective;
  j["kkt_residual"] = report.kkt_residual;
  j["constraint_violation"] = report.constraint_violation;
  j["final_step_norm"] = report.final_step_norm;
  j["oracle_calls"] = report.oracle_calls;
  j["delta_f"] = report.delta_f ? nlohmann::json(*report.delta_f) : nlohmann::json(nullptr);
  if (reference) {
    j["reference"] = reference_to_json(problem, *reference);
    j["gap"] = reference_gap(report.objective, reference->objective);
  } else {
    j["reference"] = nullptr;
    j["gap"] = nullptr;
  }
  j["message"] = report.message;
  j["config"] = config_to_json(cfg);
  return j;
}

}  // namespace sbm
