#include "sbm/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

namespace sbm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kMaxIpmIterations = 50;
constexpr double kFeasibilityRegularization = 1e-10;

// min 1/2 z' diag(h) z + f'z  s.t.  E z = b,  lo <= z <= hi  (bounds may be infinite)
//
// Stationarity: h.*z + f + E'y - zl + zu = 0.
struct Kernel {
  Vector h;
  Vector f;
  Matrix E;
  Vector b;
  Vector lo;
  Vector hi;
};

struct KernelSolution {
  Vector z;
  Vector y;
  Vector zl;
  Vector zu;
  int iterations = 0;
  bool converged = false;
  bool polished = false;
  bool rank_deficient = false;
};

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

double kernel_objective(const Kernel& k, const Vector& z) {
  return 0.5 * z.dot(k.h.cwiseProduct(z)) + k.f.dot(z);
}

// Active-set crossover from an interior point estimate: fix variables whose
// bound multiplier dominates the slack, solve the equality-constrained KKT
// system exactly and keep the result only if every sign condition holds.
std::optional<KernelSolution> polish(const Kernel& k, const KernelSolution& ipm) {
  const Eigen::Index N = k.h.size();
  const Eigen::Index m = k.b.size();
  enum class State { kFree, kLower, kUpper };
  std::vector<State> state(N, State::kFree);
  std::vector<Eigen::Index> free_idx;
  for (Eigen::Index j = 0; j < N; ++j) {
    const double sl = std::isfinite(k.lo[j]) ? ipm.z[j] - k.lo[j] : kInf;
    const double su = std::isfinite(k.hi[j]) ? k.hi[j] - ipm.z[j] : kInf;
    const bool at_lo = std::isfinite(sl) && ipm.zl[j] > sl;
    const bool at_hi = std::isfinite(su) && ipm.zu[j] > su;
    if (at_lo && at_hi) {
      state[j] = (ipm.zl[j] / std::max(sl, 1e-300) >= ipm.zu[j] / std::max(su, 1e-300))
                     ? State::kLower
                     : State::kUpper;
    } else if (at_lo) {
      state[j] = State::kLower;
    } else if (at_hi) {
      state[j] = State::kUpper;
    }
    if (state[j] == State::kFree) free_idx.push_back(j);
  }

  Vector z = ipm.z;
  for (Eigen::Index j = 0; j < N; ++j) {
    if (state[j] == State::kLower) z[j] = k.lo[j];
    if (state[j] == State::kUpper) z[j] = k.hi[j];
  }

  const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());
  const Eigen::Index dim = nf + m;
  Vector y = Vector::Zero(m);
  bool rank_deficient = false;
  if (dim > 0) {
    Matrix kkt = Matrix::Zero(dim, dim);
    Vector rhs = Vector::Zero(dim);
    Vector b_red = k.b;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (state[j] != State::kFree && m > 0) b_red -= k.E.col(j) * z[j];
    }
    for (Eigen::Index a = 0; a < nf; ++a) {
      const Eigen::Index j = free_idx[a];
      kkt(a, a) = k.h[j];
      rhs[a] = -k.f[j];
      for (Eigen::Index i = 0; i < m; ++i) {
        kkt(a, nf + i) = k.E(i, j);
        kkt(nf + i, a) = k.E(i, j);
      }
    }
    rhs.tail(m) = b_red;
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(kkt);
    const Vector sol = cod.solve(rhs);
    rank_deficient = cod.rank() < dim;
    if (!sol.allFinite()) return std::nullopt;
    const double resid = inf_norm(kkt * sol - rhs);
    if (resid > 1e-9 * (1.0 + inf_norm(rhs) + inf_norm(sol))) return std::nullopt;
    for (Eigen::Index a = 0; a < nf; ++a) z[free_idx[a]] = sol[a];
    y = sol.tail(m);
  }

  // Sign and bound checks on the (scaled) problem.
  const double ptol = 1e-9;
  Vector stat = k.h.cwiseProduct(z) + k.f;
  if (m > 0) stat += k.E.transpose() * y;
  Vector zl = Vector::Zero(N), zu = Vector::Zero(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    switch (state[j]) {
      case State::kLower:
        if (stat[j] < -ptol * (1.0 + std::abs(k.f[j]))) return std::nullopt;
        zl[j] = std::max(stat[j], 0.0);
        break;
      case State::kUpper:
        if (stat[j] > ptol * (1.0 + std::abs(k.f[j]))) return std::nullopt;
        zu[j] = std::max(-stat[j], 0.0);
        break;
      case State::kFree: {
        const double slack_tol = ptol * (1.0 + std::abs(z[j]));
        if (std::isfinite(k.lo[j]) && z[j] < k.lo[j] - slack_tol) return std::nullopt;
        if (std::isfinite(k.hi[j]) && z[j] > k.hi[j] + slack_tol) return std::nullopt;
        z[j] = std::clamp(z[j], k.lo[j], k.hi[j]);
        break;
      }
    }
  }
  if (m > 0 && inf_norm(k.E * z - k.b) > 1e-9 * (1.0 + inf_norm(k.b))) return std::nullopt;
  const double obj_ipm = kernel_objective(k, ipm.z);
  const double obj_pol = kernel_objective(k, z);
  if (obj_pol > obj_ipm + 1e-9 * (1.0 + std::abs(obj_ipm))) return std::nullopt;

  KernelSolution out = ipm;
  out.z = z;
  out.y = y;
  out.zl = zl;
  out.zu = zu;
  out.polished = true;
  out.rank_deficient = rank_deficient;
  return out;
}

// Mehrotra predictor-corrector on a kernel without fixed variables.
KernelSolution interior_point(const Kernel& k, double tol) {
  const Eigen::Index N = k.h.size();
  const Eigen::Index m = k.b.size();
  Eigen::Array<bool, Eigen::Dynamic, 1> has_lo(N), has_hi(N);
  Eigen::Index n_bounds = 0;
  for (Eigen::Index j = 0; j < N; ++j) {
    has_lo[j] = std::isfinite(k.lo[j]);
    has_hi[j] = std::isfinite(k.hi[j]);
    n_bounds += has_lo[j] + has_hi[j];
  }

  KernelSolution s;
  s.z.resize(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    if (has_lo[j] && has_hi[j]) {
      const double width = k.hi[j] - k.lo[j];
      s.z[j] = std::clamp(0.0, k.lo[j] + 0.05 * width, k.hi[j] - 0.05 * width);
    } else if (has_lo[j]) {
      s.z[j] = std::max(0.0, k.lo[j]) + 1.0;
    } else if (has_hi[j]) {
      s.z[j] = std::min(0.0, k.hi[j]) - 1.0;
    } else {
      s.z[j] = 0.0;
    }
  }
  s.y = Vector::Zero(m);
  s.zl = has_lo.select(Vector::Ones(N), Vector::Zero(N));
  s.zu = has_hi.select(Vector::Ones(N), Vector::Zero(N));

  const double b_scale = 1.0 + inf_norm(k.b);
  const double f_scale = 1.0 + inf_norm(k.f);

  Vector sl(N), su(N), D(N), Dinv(N);
  auto slacks = [&](const Vector& z) {
    for (Eigen::Index j = 0; j < N; ++j) {
      sl[j] = has_lo[j] ? z[j] - k.lo[j] : 1.0;
      su[j] = has_hi[j] ? k.hi[j] - z[j] : 1.0;
    }
  };

  for (int it = 0; it < kMaxIpmIterations; ++it) {
    slacks(s.z);
    Vector rd = k.h.cwiseProduct(s.z) + k.f - s.zl + s.zu;
    if (m > 0) rd += k.E.transpose() * s.y;
    const Vector rp = m > 0 ? Vector(k.E * s.z - k.b) : Vector::Zero(0);
    double comp = 0.0, comp_max = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (has_lo[j]) {
        comp += s.zl[j] * sl[j];
        comp_max = std::max(comp_max, s.zl[j] * sl[j]);
      }
      if (has_hi[j]) {
        comp += s.zu[j] * su[j];
        comp_max = std::max(comp_max, s.zu[j] * su[j]);
      }
    }
    const double mu = n_bounds > 0 ? comp / static_cast<double>(n_bounds) : 0.0;
    s.iterations = it;
    if (inf_norm(rp) <= tol * b_scale && inf_norm(rd) <= tol * f_scale && comp_max <= tol) {
      s.converged = true;
      return s;
    }

    for (Eigen::Index j = 0; j < N; ++j) {
      D[j] = k.h[j] + (has_lo[j] ? s.zl[j] / sl[j] : 0.0) + (has_hi[j] ? s.zu[j] / su[j] : 0.0);
      if (!(D[j] > 0.0) || !std::isfinite(D[j])) {
        throw SolverBreakdown("interior point: non-positive reduced Hessian");
      }
      Dinv[j] = 1.0 / D[j];
    }

    Eigen::LDLT<Matrix> normal;
    if (m > 0) {
      Matrix M = k.E * Dinv.asDiagonal() * k.E.transpose();
      const double reg = 1e-14 * (1.0 + M.diagonal().cwiseAbs().maxCoeff());
      M.diagonal().array() += reg;
      normal.compute(M);
      if (normal.info() != Eigen::Success) throw SolverBreakdown("interior point: normal equations");
    }

    struct Step {
      Vector dz, dy, dzl, dzu;
    };
    auto newton = [&](const Vector& tl, const Vector& tu) {
      Step st;
      Vector q = -rd;
      for (Eigen::Index j = 0; j < N; ++j) {
        if (has_lo[j]) q[j] += tl[j] / sl[j];
        if (has_hi[j]) q[j] -= tu[j] / su[j];
      }
      if (m > 0) {
        const Vector rhs = k.E * Dinv.cwiseProduct(q) + rp;
        st.dy = normal.solve(rhs);
        st.dz = Dinv.cwiseProduct(q - k.E.transpose() * st.dy);
      } else {
        st.dy = Vector::Zero(0);
        st.dz = Dinv.cwiseProduct(q);
      }
      st.dzl = Vector::Zero(N);
      st.dzu = Vector::Zero(N);
      for (Eigen::Index j = 0; j < N; ++j) {
        if (has_lo[j]) st.dzl[j] = (tl[j] - s.zl[j] * st.dz[j]) / sl[j];
        if (has_hi[j]) st.dzu[j] = (tu[j] + s.zu[j] * st.dz[j]) / su[j];
      }
      if (!st.dz.allFinite() || !st.dy.allFinite()) {
        throw SolverBreakdown("interior point: non-finite Newton step");
      }
      return st;
    };
    auto max_primal = [&](const Step& st) {
      double a = 1.0;
      for (Eigen::Index j = 0; j < N; ++j) {
        if (has_lo[j] && st.dz[j] < 0.0) a = std::min(a, -sl[j] / st.dz[j]);
        if (has_hi[j] && st.dz[j] > 0.0) a = std::min(a, su[j] / st.dz[j]);
      }
      return a;
    };
    auto max_dual = [&](const Step& st) {
      double a = 1.0;
      for (Eigen::Index j = 0; j < N; ++j) {
        if (has_lo[j] && st.dzl[j] < 0.0) a = std::min(a, -s.zl[j] / st.dzl[j]);
        if (has_hi[j] && st.dzu[j] < 0.0) a = std::min(a, -s.zu[j] / st.dzu[j]);
      }
      return a;
    };

    // predictor
    Vector tl = Vector::Zero(N), tu = Vector::Zero(N);
    for (Eigen::Index j = 0; j < N; ++j) {
      if (has_lo[j]) tl[j] = -s.zl[j] * sl[j];
      if (has_hi[j]) tu[j] = -s.zu[j] * su[j];
    }
    const Step aff = newton(tl, tu);
    const double ap_aff = max_primal(aff), ad_aff = max_dual(aff);
    double comp_aff = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (has_lo[j]) comp_aff += (s.zl[j] + ad_aff * aff.dzl[j]) * (sl[j] + ap_aff * aff.dz[j]);
      if (has_hi[j]) comp_aff += (s.zu[j] + ad_aff * aff.dzu[j]) * (su[j] - ap_aff * aff.dz[j]);
    }
    const double mu_aff = n_bounds > 0 ? comp_aff / static_cast<double>(n_bounds) : 0.0;
    const double sigma = mu > 0.0 ? std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3) : 0.0;

    // corrector
    for (Eigen::Index j = 0; j < N; ++j) {
      if (has_lo[j]) tl[j] = sigma * mu - s.zl[j] * sl[j] - aff.dzl[j] * aff.dz[j];
      if (has_hi[j]) tu[j] = sigma * mu - s.zu[j] * su[j] + aff.dzu[j] * aff.dz[j];
    }
    const Step st = newton(tl, tu);
    const double ap = std::min(1.0, 0.995 * max_primal(st));
    const double ad = std::min(1.0, 0.995 * max_dual(st));
    s.z += ap * st.dz;
    s.y += ad * st.dy;
    s.zl += ad * st.dzl;
    s.zu += ad * st.dzu;
    // keep strictly interior against round-off
    for (Eigen::Index j = 0; j < N; ++j) {
      if (has_lo[j]) s.zl[j] = std::max(s.zl[j], 1e-300);
      if (has_hi[j]) s.zu[j] = std::max(s.zu[j], 1e-300);
    }
  }
  s.iterations = kMaxIpmIterations;
  slacks(s.z);
  Vector rd = k.h.cwiseProduct(s.z) + k.f - s.zl + s.zu;
  if (m > 0) rd += k.E.transpose() * s.y;
  const double rp = m > 0 ? inf_norm(k.E * s.z - k.b) : 0.0;
  double comp_max = 0.0;
  for (Eigen::Index j = 0; j < N; ++j) {
    if (has_lo[j]) comp_max = std::max(comp_max, s.zl[j] * sl[j]);
    if (has_hi[j]) comp_max = std::max(comp_max, s.zu[j] * su[j]);
  }
  s.converged = rp <= tol * b_scale && inf_norm(rd) <= tol * f_scale && comp_max <= tol;
  return s;
}

// Removes fixed variables (lo == hi), scales the objective, runs the interior
// point method and the polish, and maps everything back.
KernelSolution solve_kernel(const Kernel& full, double tol) {
  const Eigen::Index N = full.h.size();
  const Eigen::Index m = full.b.size();
  std::vector<Eigen::Index> free_idx;
  Vector z_fixed = Vector::Zero(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    if (full.hi[j] < full.lo[j]) throw SolverBreakdown("QP kernel: empty box");
    if (full.hi[j] == full.lo[j]) {
      z_fixed[j] = full.lo[j];
    } else {
      free_idx.push_back(j);
    }
  }
  const Eigen::Index nf = static_cast<Eigen::Index>(free_idx.size());

  const double scale =
      std::max({1.0, inf_norm(full.f), full.h.size() > 0 ? inf_norm(full.h) : 0.0});
  Kernel k;
  k.h.resize(nf);
  k.f.resize(nf);
  k.lo.resize(nf);
  k.hi.resize(nf);
  k.E.resize(m, nf);
  k.b = full.b;
  if (m > 0) k.b -= full.E * z_fixed;
  for (Eigen::Index a = 0; a < nf; ++a) {
    const Eigen::Index j = free_idx[a];
    k.h[a] = full.h[j] / scale;
    k.f[a] = full.f[j] / scale;
    k.lo[a] = full.lo[j];
    k.hi[a] = full.hi[j];
    if (m > 0) k.E.col(a) = full.E.col(j);
  }

  KernelSolution red;
  if (nf > 0) {
    red = interior_point(k, tol);
    if (auto p = polish(k, red)) red = *p;
  } else {
    red.z = Vector::Zero(0);
    red.y = Vector::Zero(m);
    red.zl = red.zu = Vector::Zero(0);
    red.converged = m == 0 || inf_norm(k.b) <= tol * (1.0 + inf_norm(full.b));
    red.polished = red.converged;
  }

  KernelSolution out;
  out.iterations = red.iterations;
  out.converged = red.converged;
  out.polished = red.polished;
  out.rank_deficient = red.rank_deficient;
  out.z = z_fixed;
  out.y = red.y * scale;
  out.zl = Vector::Zero(N);
  out.zu = Vector::Zero(N);
  for (Eigen::Index a = 0; a < nf; ++a) {
    const Eigen::Index j = free_idx[a];
    out.z[j] = red.z[a];
    out.zl[j] = red.zl[a] * scale;
    out.zu[j] = red.zu[a] * scale;
  }
  // Multipliers of fixed variables from stationarity.
  if (nf < N) {
    Vector stat = full.h.cwiseProduct(out.z) + full.f;
    if (m > 0) stat += full.E.transpose() * out.y;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (full.hi[j] != full.lo[j]) continue;
      out.zl[j] = std::max(stat[j], 0.0);
      out.zu[j] = std::max(-stat[j], 0.0);
    }
  }
  return out;
}

void require_shape(bool ok, const char* what) {
  if (!ok) throw ShapeError(std::string("QP: ") + what);
}

Kernel slack_kernel(const Matrix& A, const Vector& b, const Vector& lower, const Vector& upper,
                    const Vector& h_d, const Vector& f_d) {
  const Eigen::Index n = lower.size();
  const Eigen::Index m = b.size();
  Kernel k;
  k.h = Vector::Zero(n + 2 * m);
  k.f = Vector::Ones(n + 2 * m);
  k.h.head(n) = h_d;
  k.f.head(n) = f_d;
  k.E = Matrix::Zero(m, n + 2 * m);
  k.E.leftCols(n) = A;
  k.E.block(0, n, m, m) = -Matrix::Identity(m, m);
  k.E.block(0, n + m, m, m) = Matrix::Identity(m, m);
  k.b = b;
  k.lo = Vector::Zero(n + 2 * m);
  k.hi = Vector::Constant(n + 2 * m, kInf);
  k.lo.head(n) = lower;
  k.hi.head(n) = upper;
  return k;
}

void validate_box_and_rows(const Matrix& A, const Vector& b, const Vector& lower,
                           const Vector& upper) {
  const Eigen::Index n = lower.size();
  require_shape(upper.size() == n, "upper bound size");
  require_shape(A.rows() == b.size(), "rows of A and b");
  require_shape(b.size() == 0 || A.cols() == n, "columns of A");
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(lower[j] <= upper[j])) throw ShapeError("QP: empty box");
  }
  if (!A.allFinite() || !b.allFinite()) throw ShapeError("QP: non-finite data");
}

double l1_violation(const Matrix& A, const Vector& b, const Vector& d) {
  if (b.size() == 0) return 0.0;
  return (A * d - b).lpNorm<1>();
}

}  // namespace

void EqBoxQP::validate() const {
  validate_box_and_rows(A, b, lower, upper);
  require_shape(g.size() == lower.size(), "size of g");
  require_shape(alpha.size() == g.size(), "size of alpha");
  if (!g.allFinite()) throw ShapeError("QP: non-finite g");
  for (Eigen::Index j = 0; j < alpha.size(); ++j) {
    if (!(alpha[j] > 0.0) || !std::isfinite(alpha[j])) {
      throw ShapeError("QP: alpha must be positive and finite");
    }
  }
}

Vector linearized_sign(const Matrix& A, const Vector& b, const Vector& d) {
  Vector s = Vector::Zero(b.size());
  if (b.size() == 0) return s;
  const Vector r = A * d - b;
  for (Eigen::Index i = 0; i < r.size(); ++i) s[i] = r[i] > 0.0 ? 1.0 : (r[i] < 0.0 ? -1.0 : 0.0);
  return s;
}

double eq_box_objective(const EqBoxQP& qp, const Vector& d) {
  return qp.g.dot(d) + 0.5 * d.dot(qp.alpha.cwiseProduct(d));
}

double penalty_objective(const PenaltyQP& qp, const Vector& d) {
  return qp.pi * eq_box_objective(qp.base, d) + l1_violation(qp.base.A, qp.base.b, d);
}

FeasibilityResult solve_feasibility_l1(const Matrix& A, const Vector& b, const Vector& lower,
                                       const Vector& upper, double tol) {
  validate_box_and_rows(A, b, lower, upper);
  const Eigen::Index n = lower.size();
  FeasibilityResult out;
  if (b.size() == 0) {
    out.d = Vector::Zero(n).cwiseMax(lower).cwiseMin(upper);
    return out;
  }
  const Kernel k = slack_kernel(A, b, lower, upper,
                                Vector::Constant(n, 2.0 * kFeasibilityRegularization),
                                Vector::Zero(n));
  const KernelSolution s = solve_kernel(k, tol);
  if (!s.converged && !s.polished) {
    // An LP optimum is still usable when the iterate is close; check it.
    if (!s.z.allFinite()) throw SolverBreakdown("feasibility problem: solver failed");
  }
  out.d = s.z.head(n).cwiseMax(lower).cwiseMin(upper);
  out.violation = l1_violation(A, b, out.d);
  out.delta_f = std::max(0.0, b.lpNorm<1>() - out.violation);
  return out;
}

QPSolution solve_eq_box(const EqBoxQP& qp, double tol) {
  qp.validate();
  const Eigen::Index n = qp.n();
  const Eigen::Index m = qp.m();
  QPSolution out;
  out.lambda = Vector::Zero(m);
  out.zeta_l = Vector::Zero(n);
  out.zeta_u = Vector::Zero(n);

  if (m > 0) {
    const FeasibilityResult phase1 = solve_feasibility_l1(qp.A, qp.b, qp.lower, qp.upper, tol);
    out.phase1_violation = phase1.violation;
    if (phase1.violation > 1e-8 * (1.0 + qp.b.lpNorm<1>())) {
      out.status = QPStatus::kInconsistent;
      out.d = phase1.d;
      return out;
    }
  }

  Kernel k;
  k.h = qp.alpha;
  k.f = qp.g;
  k.E = m > 0 ? qp.A : Matrix::Zero(0, n);
  k.b = qp.b;
  k.lo = qp.lower;
  k.hi = qp.upper;
  const KernelSolution s = solve_kernel(k, tol);
  out.status = QPStatus::kOptimal;
  out.d = s.z;
  out.lambda = -s.y;
  out.zeta_l = s.zl;
  out.zeta_u = s.zu;
  out.iterations = s.iterations;
  out.polished = s.polished;
  out.rank_deficient = s.rank_deficient;
  out.kkt_residual = eq_box_kkt_residual(qp, out);
  if (!s.converged && !s.polished) {
    const double scale = 1.0 + inf_norm(qp.g) + inf_norm(qp.b);
    if (!(out.kkt_residual <= 1e-6 * scale)) {
      std::ostringstream os;
      os << "eq-box QP: interior point did not converge (KKT residual " << out.kkt_residual << ")";
      throw SolverBreakdown(os.str());
    }
  }
  return out;
}

QPSolution solve_penalty(const PenaltyQP& qp, double tol) {
  qp.base.validate();
  if (!(qp.pi > 0.0) || !std::isfinite(qp.pi)) throw ShapeError("QP: penalty pi must be > 0");
  const EqBoxQP& base = qp.base;
  const Eigen::Index n = base.n();
  const Eigen::Index m = base.m();

  const Kernel k = slack_kernel(base.A, base.b, base.lower, base.upper, qp.pi * base.alpha,
                                qp.pi * base.g);
  const KernelSolution s = solve_kernel(k, tol);
  QPSolution out;
  out.status = QPStatus::kOptimal;
  out.d = s.z.head(n);
  out.lambda = s.y;
  out.zeta_l = s.zl.head(n);
  out.zeta_u = s.zu.head(n);
  const Vector r = m > 0 ? Vector(base.A * out.d - base.b) : Vector::Zero(0);
  out.v = r.cwiseMax(0.0);
  out.w = (-r).cwiseMax(0.0);
  out.iterations = s.iterations;
  out.polished = s.polished;
  out.rank_deficient = s.rank_deficient;
  out.kkt_residual = penalty_kkt_residual(qp, out);
  if (!s.converged && !s.polished) {
    const double scale = 1.0 + qp.pi * inf_norm(base.g) + 1.0;
    if (!(out.kkt_residual <= 1e-6 * scale)) {
      std::ostringstream os;
      os << "penalty QP: interior point did not converge (KKT residual " << out.kkt_residual
         << ")";
      throw SolverBreakdown(os.str());
    }
  }
  return out;
}

namespace {

double bound_terms(const Vector& d, const Vector& lower, const Vector& upper, const Vector& zl,
                   const Vector& zu) {
  double res = 0.0;
  for (Eigen::Index j = 0; j < d.size(); ++j) {
    const double cl = std::isfinite(lower[j]) ? zl[j] * (d[j] - lower[j]) : zl[j];
    const double cu = std::isfinite(upper[j]) ? zu[j] * (upper[j] - d[j]) : zu[j];
    res = std::max({res, std::abs(cl), std::abs(cu), -zl[j], -zu[j], lower[j] - d[j],
                    d[j] - upper[j]});
  }
  return res;
}

}  // namespace

double eq_box_kkt_residual(const EqBoxQP& qp, const QPSolution& sol) {
  Vector stat = qp.g + qp.alpha.cwiseProduct(sol.d) - sol.zeta_l + sol.zeta_u;
  double res = 0.0;
  if (qp.m() > 0) {
    stat -= qp.A.transpose() * sol.lambda;
    res = inf_norm(qp.A * sol.d - qp.b);
  }
  res = std::max(res, inf_norm(stat));
  return std::max(res, bound_terms(sol.d, qp.lower, qp.upper, sol.zeta_l, sol.zeta_u));
}

double penalty_kkt_residual(const PenaltyQP& qp, const QPSolution& sol) {
  const EqBoxQP& base = qp.base;
  Vector stat = qp.pi * (base.g + base.alpha.cwiseProduct(sol.d)) - sol.zeta_l + sol.zeta_u;
  double res = 0.0;
  if (base.m() > 0) {
    stat += base.A.transpose() * sol.lambda;
    const Vector r = base.A * sol.d - base.b;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const double v = std::max(r[i], 0.0), w = std::max(-r[i], 0.0);
      res = std::max({res, std::abs(sol.lambda[i]) - 1.0, (1.0 - sol.lambda[i]) * v,
                      (1.0 + sol.lambda[i]) * w});
    }
  }
  res = std::max(res, inf_norm(stat));
  return std::max(res, bound_terms(sol.d, base.lower, base.upper, sol.zeta_l, sol.zeta_u));
}

}  // namespace sbm
